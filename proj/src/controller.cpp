#include "dampc/controller.hpp"

#include "controller_internal.hpp"

namespace dampc {

using namespace detail;

const ConstraintFamily& LocalQp::family(const std::string& name) const {
    for (const ConstraintFamily& f : families)
        if (f.name == name) return f;
    fail(ErrorKind::DesignMismatch, "no constraint family '" + name + "'");
}

QpProblem LocalQp::as_qp() const {
    QpProblem p;
    p.P = H;
    p.q = g;
    p.A_eq = A_eq;
    p.b_eq = b_eq;
    p.A_in = A_in;
    p.b_in = b_in;
    return p;
}

std::vector<ConstraintFamily> family_counts(const NetworkConfig& cfg, const TubeDesign& design, int s,
                                            const ParamSet& ps, TubeForm form) {
    const AgentModel& a = cfg.agents[at(s)].model;
    const AgentTube& t = design.agents[at(s)];
    const Eigen::Index N = cfg.horizon, nx = t.Hx.rows(), nz = a.F.rows(),
                       nb = static_cast<Eigen::Index>(a.neighbors.size());
    std::vector<ConstraintFamily> out;
    auto push = [&](const std::string& name, bool eq, Eigen::Index rows) { out.push_back({name, eq, 0, rows}); };
    push("tube_init", false, nx);
    push("state_input", false, nz * N);
    if (form == TubeForm::Compact) {
        const Eigen::Index V = Eigen::Index{1} << ps.dim();
        push("tube_propagation", false, nx * N * V);
        push("alpha_nonneg", false, nb * N);
        push("certainty_equivalence", true, a.n * N);
    } else {
        const Eigen::Index J = combo_count(cfg, design, a.neighbors);
        const Eigen::Index nt = ps.rows->H.rows();
        push("tube_propagation", false, nx * N * J);
        push("multiplier_equality", true, nx * a.p() * N * J);
        push("alpha_nonneg", false, nb * N);
        push("lambda_nonneg", false, nx * nt * N * J);
        push("certainty_equivalence", true, a.n * N);
    }
    return out;
}

LocalQp build_local_subproblem(const StepView& st, int s, TubeForm form, double margin) {
    check_view(st);
    const AgentStep as = prepare(st, s, form == TubeForm::Compact);
    const AgentSpec& sp = *as.spec;
    const AgentModel& a = *as.a;
    const AgentTube& tb = *as.tube;
    const ParamSet& ps = st.sets[at(s)];
    const int N = st.cfg.horizon;
    const int self = a.self_pos();
    const auto nb = static_cast<int>(a.neighbors.size());
    const Eigen::Index nx = tb.Hx.rows();
    const Mat& Hx = tb.Hx;

    LocalQp qp;
    qp.agent = s;
    qp.form = form;
    qp.layout = make_layout(st.cfg, st.design, s, ps, form);
    const LocalLayout& L = qp.layout;
    const Eigen::Index nv = L.size;
    qp.x_own = own_state(st, s);
    qp.x_nbhd = neighborhood_slice(st.cfg, st.model, s, st.x);
    const Vec& xs = qp.x_own;
    const Vec& xnb = qp.x_nbhd;
    const double alpha_N = (1.0 - margin) * tb.alpha_bar;

    // Cost.
    qp.H = Mat::Zero(nv, nv);
    qp.g = Vec::Zero(nv);
    qp.constant = quad(xs, sp.Q);
    const Mat R2 = 2.0 * sp.R;
    {
        const Vec a0 = tb.K * xnb;
        qp.H.block(L.v(0), L.v(0), a.m, a.m) += R2;
        qp.g.segment(L.v(0), a.m) += R2 * a0;
        qp.constant += quad(a0, sp.R);
    }
    for (int l = 1; l < N; ++l) {
        const int xi = L.xhat(self, l);
        qp.H.block(xi, xi, a.n, a.n) += 2.0 * sp.Q;
        // u_l = S y with S = [K blocks at xhat copies, I at v_l]
        Mat S = Mat::Zero(a.m, nv);
        for (int k = 0; k < nb; ++k)
            S.middleCols(L.xhat(k, l), L.dims[at(k)]) = tb.K.middleCols(a.nbhd_offset[at(k)], L.dims[at(k)]);
        S.middleCols(L.v(l), a.m) = Mat::Identity(a.m, a.m);
        qp.H += S.transpose() * R2 * S;
    }
    qp.H.block(L.xN_offset, L.xN_offset, a.n, a.n) += 2.0 * sp.P;
    // The multipliers carry no cost.
    for (Eigen::Index i = L.lambda_offset; i < nv; ++i) qp.H(i, i) += tol::qp_regularization;

    RowSet in(nv), eq(nv);
    std::vector<ConstraintFamily> fam_in, fam_eq;

    in.begin(fam_in, "tube_init", false);
    {
        const Vec rhs = -Hx * xs;
        for (Eigen::Index r = 0; r < nx; ++r) {
            Vec& row = in.add(rhs(r));
            row.segment(L.z(self, 0), a.n) = -Hx.row(r).transpose();
            row(L.alpha(self, 0)) = -1.0;
        }
    }
    in.end(fam_in);

    in.begin(fam_in, "state_input", false);
    for (int l = 0; l < N; ++l)
        for (Eigen::Index r = 0; r < a.F.rows(); ++r) {
            Vec& row = in.add(1.0 - margin);
            for (int k = 0; k < nb; ++k) {
                row.segment(L.z(k, l), L.dims[at(k)]) =
                    tb.Fcl.row(r).segment(a.nbhd_offset[at(k)], L.dims[at(k)]).transpose();
                row(L.alpha(k, l)) = tb.fbar_nb(r, k);
            }
            row.segment(L.v(l), a.m) = a.G.row(r).transpose();
        }
    in.end(fam_in);

    // Adds -alpha_{l+1,s} - H_r z_{l+1,s} to a propagation row, or folds the
    // terminal values into the right-hand side at l = N-1.
    auto next_step = [&](Vec& row, Eigen::Index r, int l) {
        if (l + 1 < N) {
            row(L.alpha(self, l + 1)) -= 1.0;
            row.segment(L.z(self, l + 1), a.n) -= Hx.row(r).transpose();
        } else {
            in.rhs_back() += alpha_N;
        }
    };

    in.begin(fam_in, "tube_propagation", false);
    if (form == TubeForm::Compact) {
        for (int l = 0; l < N; ++l)
            for (std::size_t vi = 0; vi < as.thetas.size(); ++vi) {
                const Mat HA = Hx * as.Acl[vi];
                const Mat HB = Hx * as.Bv[vi];
                for (Eigen::Index r = 0; r < nx; ++r) {
                    Vec& row = in.add(-tb.wbar(r) - margin);
                    for (int k = 0; k < nb; ++k) {
                        row.segment(L.z(k, l), L.dims[at(k)]) =
                            HA.row(r).segment(a.nbhd_offset[at(k)], L.dims[at(k)]).transpose();
                        row(L.alpha(k, l)) = as.c[vi](r, k);
                    }
                    row.segment(L.v(l), a.m) = HB.row(r).transpose();
                    next_step(row, r, l);
                }
            }
        in.end(fam_in);
    } else {
        const Mat& Ht = ps.rows->H;
        const Vec& ht = ps.h;
        const Eigen::Index nt = Ht.rows();
        const Mat HA0 = Hx * (a.A[0] + a.B[0] * tb.K);
        const Mat HB0 = Hx * a.B[0];
        std::vector<Mat> HAi, HBi;
        for (int i = 1; i <= a.p(); ++i) {
            HAi.push_back(Hx * (a.A[at(i)] + a.B[at(i)] * tb.K));
            HBi.push_back(Hx * a.B[at(i)]);
        }
        auto lam = [&](int l, int j, Eigen::Index r, Eigen::Index q) {
            return L.lambda(l, j) + static_cast<int>(r * nt + q);
        };
        // H_r M x^j with x^j = z + alpha * vertex, split over the neighbor blocks.
        auto tube_terms = [&](Vec& row, const Mat& HM, Eigen::Index r, int l, const std::vector<int>& idx) {
            for (int k = 0; k < nb; ++k) {
                const Eigen::Index off = a.nbhd_offset[at(k)];
                const Vec hm = HM.row(r).segment(off, L.dims[at(k)]).transpose();
                row.segment(L.z(k, l), L.dims[at(k)]) += hm;
                row(L.alpha(k, l)) += hm.dot(st.design.agents[at(a.neighbors[at(k)])].X0.vertices[at(idx[at(k)])]);
            }
        };
        for (int l = 0; l < N; ++l)
            for (int j = 0; j < L.combos; ++j) {
                const std::vector<int> idx = decode_combo(st.design, a.neighbors, j);
                for (Eigen::Index r = 0; r < nx; ++r) {
                    Vec& row = in.add(-tb.wbar(r) - margin);
                    for (Eigen::Index q = 0; q < nt; ++q) row(lam(l, j, r, q)) = ht(q);
                    tube_terms(row, HA0, r, l, idx);
                    row.segment(L.v(l), a.m) += HB0.row(r).transpose();
                    next_step(row, r, l);
                }
            }
        in.end(fam_in);

        eq.begin(fam_eq, "multiplier_equality", true);
        for (int l = 0; l < N; ++l)
            for (int j = 0; j < L.combos; ++j) {
                const std::vector<int> idx = decode_combo(st.design, a.neighbors, j);
                for (Eigen::Index r = 0; r < nx; ++r)
                    for (int i = 0; i < a.p(); ++i) {
                        Vec& row = eq.add(0.0);
                        tube_terms(row, HAi[at(i)], r, l, idx);
                        row.segment(L.v(l), a.m) += HBi[at(i)].row(r).transpose();
                        for (Eigen::Index q = 0; q < nt; ++q) row(lam(l, j, r, q)) -= Ht(q, i);
                    }
            }
        eq.end(fam_eq);
    }

    in.begin(fam_in, "alpha_nonneg", false);
    for (int l = 0; l < N; ++l)
        for (int k = 0; k < nb; ++k) in.add(0.0)(L.alpha(k, l)) = -1.0;
    in.end(fam_in);

    if (form == TubeForm::Literal) {
        in.begin(fam_in, "lambda_nonneg", false);
        for (Eigen::Index i = L.lambda_offset; i < nv; ++i) in.add(0.0)(i) = -1.0;
        in.end(fam_in);
    }

    eq.begin(fam_eq, "certainty_equivalence", true);
    {
        const Vec& th = st.theta_hat[at(s)];
        const Mat Bh = a.B_of(th);
        const Mat Ah = a.A_of(th) + Bh * tb.K;
        for (int l = 0; l < N; ++l) {
            const Vec c0 = l == 0 ? Vec(Ah * xnb) : Vec::Zero(a.n);
            for (int i = 0; i < a.n; ++i) {
                Vec& row = eq.add(c0(i));
                if (l + 1 < N) row(L.xhat(self, l + 1) + i) = 1.0;
                else row(L.xN_offset + i) = 1.0;
                if (l > 0)
                    for (int k = 0; k < nb; ++k)
                        row.segment(L.xhat(k, l), L.dims[at(k)]) -=
                            Ah.row(i).segment(a.nbhd_offset[at(k)], L.dims[at(k)]).transpose();
                row.segment(L.v(l), a.m) -= Bh.row(i).transpose();
            }
        }
    }
    eq.end(fam_eq);

    in.finish(qp.A_in, qp.b_in);
    eq.finish(qp.A_eq, qp.b_eq);
    // Families in the order of family_counts.
    for (const char* name : {"tube_init", "state_input", "tube_propagation", "multiplier_equality", "alpha_nonneg",
                             "lambda_nonneg", "certainty_equivalence"}) {
        for (const auto* list : {&fam_in, &fam_eq})
            for (const ConstraintFamily& f : *list)
                if (f.name == name) qp.families.push_back(f);
    }
    return qp;
}

LocalDecision read_local(const StepView& st, const LocalQp& qp, const Vec& y) {
    const AgentSpec& sp = st.cfg.agents[at(qp.agent)];
    const AgentTube& tb = st.design.agents[at(qp.agent)];
    const AgentModel& a = sp.model;
    const LocalLayout& L = qp.layout;
    const int N = L.N, self = a.self_pos();
    LocalDecision d;
    d.alpha = Vec::Zero(N + 1);
    for (int l = 0; l < N; ++l) {
        d.z.push_back(y.segment(L.z(self, l), a.n));
        d.alpha(l) = y(L.alpha(self, l));
        d.v.push_back(y.segment(L.v(l), a.m));
    }
    d.z.push_back(Vec::Zero(a.n));
    d.alpha(N) = tb.alpha_bar;
    d.xhat.push_back(qp.x_own);
    for (int l = 1; l < N; ++l) d.xhat.push_back(y.segment(L.xhat(self, l), a.n));
    d.xhat.push_back(y.segment(L.xN_offset, a.n));
    for (int l = 0; l < N; ++l) {
        Vec xl(a.nbhd_dim());
        if (l == 0) xl = qp.x_nbhd;
        else
            for (std::size_t k = 0; k < a.neighbors.size(); ++k)
                xl.segment(a.nbhd_offset[k], L.dims[k]) = y.segment(L.xhat(static_cast<int>(k), l), L.dims[k]);
        d.uhat.push_back(tb.K * xl + d.v[at(l)]);
    }
    if (qp.form == TubeForm::Literal)
        for (int l = 0; l < N; ++l)
            for (int j = 0; j < L.combos; ++j)
                d.lambda.push_back(Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                    y.data() + L.lambda(l, j), L.lambda_rows, L.lambda_cols));
    for (int l = 0; l < N; ++l) d.cost += quad(d.xhat[at(l)], sp.Q) + quad(d.uhat[at(l)], sp.R);
    d.cost += quad(d.xhat[at(N)], sp.P);
    return d;
}

}  // namespace dampc
