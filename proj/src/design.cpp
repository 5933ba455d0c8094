#include "dampc/design.hpp"

#include <json.hpp>

#include <Eigen/Eigenvalues>

#include <cmath>
#include <numbers>

namespace dampc {

bool AgentThetaRows::axis_aligned() const {
    for (Eigen::Index r = 0; r < H.rows(); ++r)
        if ((H.row(r).array() != 0.0).count() != 1) return false;
    for (std::size_t i = 0; i < upper.size(); ++i)
        if (upper[i] < 0 || lower[i] < 0) return false;
    return true;
}

int RedundantThetaStructure::total_rows() const {
    int t = 0;
    for (const auto& a : agents) t += static_cast<int>(a.H.rows());
    return t;
}

namespace {

// Shared skeleton; `support` returns max over X0 of neighbor sg of c'x.
template <class Support>
TubeDesign offline_constants(const NetworkConfig& cfg, Support support) {
    TubeDesign d;
    const int S = cfg.num_agents();
    for (int s = 0; s < S; ++s) {
        const AgentSpec& spec = cfg.agents[static_cast<std::size_t>(s)];
        const AgentModel& a = spec.model;
        AgentTube t;
        t.Hx = spec.Hx;
        t.X0 = spec.X0;
        t.K = spec.K;
        t.Fcl = a.F + a.G * spec.K;
        const auto nb = static_cast<Eigen::Index>(a.neighbors.size());
        t.fbar_nb = Mat::Zero(t.Fcl.rows(), nb);
        for (Eigen::Index k = 0; k < nb; ++k) {
            const int sg = a.neighbors[static_cast<std::size_t>(k)];
            const int off = a.nbhd_offset[static_cast<std::size_t>(k)];
            const int ns = cfg.agents[static_cast<std::size_t>(sg)].model.n;
            for (Eigen::Index i = 0; i < t.Fcl.rows(); ++i) {
                const Vec c = t.Fcl.block(i, off, 1, ns).transpose();
                t.fbar_nb(i, k) = c.cwiseAbs().maxCoeff() == 0.0 ? 0.0 : support(sg, c);
            }
        }
        t.fbar = t.fbar_nb.rowwise().sum();
        t.wbar.resize(t.Hx.rows());
        for (Eigen::Index r = 0; r < t.Hx.rows(); ++r)
            t.wbar(r) = box_support(a.w_lo, a.w_hi, t.Hx.row(r).transpose());
        d.agents.push_back(std::move(t));
    }
    for (int s = 0; s < S; ++s) {
        double ab = 1.0;
        for (int t = 0; t < S; ++t) {
            const AgentModel& at = cfg.agents[static_cast<std::size_t>(t)].model;
            auto it = std::find(at.neighbors.begin(), at.neighbors.end(), s);
            if (it == at.neighbors.end()) continue;
            const auto k = it - at.neighbors.begin();
            const AgentTube& tt = d.agents[static_cast<std::size_t>(t)];
            const int off = at.nbhd_offset[static_cast<std::size_t>(k)];
            const int ns = cfg.agents[static_cast<std::size_t>(s)].model.n;
            if (tt.Fcl.rows() == 0 || tt.Fcl.middleCols(off, ns).cwiseAbs().maxCoeff() == 0.0) continue;
            const double fmax = tt.fbar.maxCoeff();
            if (fmax <= 0.0) continue;
            ab = std::min(ab, 1.0 / fmax);
        }
        d.agents[static_cast<std::size_t>(s)].alpha_bar = ab;
    }
    return d;
}

}  // namespace

TubeDesign compute_offline_constants(const NetworkConfig& cfg) {
    std::vector<Polytope> X0;
    for (const auto& spec : cfg.agents) {
        try {
            X0.emplace_back(spec.Hx, Vec::Ones(spec.Hx.rows()), true);
        } catch (const Error& e) {
            fail(ErrorKind::UnboundedSupport,
                 "agents[" + std::to_string(spec.model.id) + "].tube.H is not compact: " + e.what());
        }
    }
    return offline_constants(cfg, [&](int sg, const Vec& c) { return support_value(X0[static_cast<std::size_t>(sg)], c); });
}

TubeDesign compute_offline_constants_by_vertices(const NetworkConfig& cfg) {
    return offline_constants(cfg, [&](int sg, const Vec& c) {
        return cfg.agents[static_cast<std::size_t>(sg)].X0.max_dot(c);
    });
}

RedundantThetaStructure build_redundant_theta(const NetworkConfig& cfg) {
    return build_redundant_theta(cfg, cfg.num_params > 0 ? cfg.theta0() : Polytope());
}

RedundantThetaStructure build_redundant_theta(const NetworkConfig& cfg, const Polytope& theta0) {
    const int S = cfg.num_agents();
    RedundantThetaStructure out;
    out.agents.resize(static_cast<std::size_t>(S));
    std::vector<std::vector<Eigen::Index>> rows(static_cast<std::size_t>(S));
    if (cfg.num_params > 0) {
        const Mat& H = theta0.H();
        for (Eigen::Index r = 0; r < H.rows(); ++r) {
            std::vector<int> involved;
            for (int j = 0; j < cfg.num_params; ++j)
                if (H(r, j) != 0.0) involved.push_back(j);
            bool any = false;
            for (int s = 0; s < S; ++s) {
                const AgentModel& a = cfg.agents[static_cast<std::size_t>(s)].model;
                bool owns = true;
                for (int j : involved) owns = owns && a.local_param(j) >= 0;
                if (!owns) continue;
                rows[static_cast<std::size_t>(s)].push_back(r);
                any = true;
            }
            if (!any)
                fail(ErrorKind::UnstructuredRow,
                     "theta0 row " + std::to_string(r) + " mixes parameters with no common agent");
        }
    }
    for (int s = 0; s < S; ++s) {
        const AgentModel& a = cfg.agents[static_cast<std::size_t>(s)].model;
        AgentThetaRows& t = out.agents[static_cast<std::size_t>(s)];
        const auto& rs = rows[static_cast<std::size_t>(s)];
        t.H = Mat::Zero(static_cast<Eigen::Index>(rs.size()), a.p());
        t.h0 = Vec::Zero(static_cast<Eigen::Index>(rs.size()));
        t.upper.assign(static_cast<std::size_t>(a.p()), -1);
        t.lower.assign(static_cast<std::size_t>(a.p()), -1);
        for (std::size_t k = 0; k < rs.size(); ++k) {
            const auto r = rs[k];
            const auto kk = static_cast<Eigen::Index>(k);
            for (int i = 0; i < a.p(); ++i) t.H(kk, i) = theta0.H()(r, a.params[static_cast<std::size_t>(i)]);
            t.h0(kk) = theta0.h()(r);
            t.global_row.push_back(static_cast<int>(r));
            if ((t.H.row(kk).array() != 0.0).count() == 1) {
                Eigen::Index i;
                t.H.row(kk).cwiseAbs().maxCoeff(&i);
                auto& slot = t.H(kk, i) > 0 ? t.upper[static_cast<std::size_t>(i)] : t.lower[static_cast<std::size_t>(i)];
                // Rows are normalised so the axis coefficient is exactly +-1.
                if (slot < 0 && std::abs(t.H(kk, i)) == 1.0) slot = static_cast<int>(k);
            }
        }
    }
    return out;
}

Mat assemble_gain(const NetworkConfig& cfg) {
    const GlobalModel g = assemble_global(cfg);
    Mat K = Mat::Zero(g.m(), g.n());
    for (int s = 0; s < cfg.num_agents(); ++s) {
        const AgentSpec& spec = cfg.agents[static_cast<std::size_t>(s)];
        const AgentModel& a = spec.model;
        for (std::size_t k = 0; k < a.neighbors.size(); ++k) {
            const int sg = a.neighbors[k];
            const int ns = cfg.agents[static_cast<std::size_t>(sg)].model.n;
            K.block(g.u_offset[static_cast<std::size_t>(s)], g.x_offset[static_cast<std::size_t>(sg)], a.m, ns) =
                spec.K.block(0, a.nbhd_offset[k], a.m, ns);
        }
    }
    return K;
}

GainReport validate_gain(const NetworkConfig& cfg) {
    GainReport rep;
    const GlobalModel g = assemble_global(cfg);
    const Mat K = assemble_gain(cfg);
    std::vector<Vec> corners;
    if (cfg.num_params == 0) {
        corners.emplace_back(0);
    } else {
        const auto box = g.theta0.as_box();
        if (!box) return rep;
        corners = box_vertices(box->first, box->second).vertices;
    }
    rep.checked = true;
    for (const Vec& th : corners) {
        const Mat Acl = g.A_of(th) + g.B_of(th) * K;
        const double r = Eigen::EigenSolver<Mat>(Acl, false).eigenvalues().cwiseAbs().maxCoeff();
        rep.radii.push_back(r);
        rep.max_radius = std::max(rep.max_radius, r);
    }
    return rep;
}

TerminalReport validate_terminal_set(const TubeDesign& design, const NetworkConfig& cfg) {
    TerminalReport rep;
    const RedundantThetaStructure rt = build_redundant_theta(cfg);
    rep.checked = true;
    rep.worst_excess = -INFINITY;
    for (int s = 0; s < cfg.num_agents(); ++s) {
        const AgentSpec& spec = cfg.agents[static_cast<std::size_t>(s)];
        const AgentModel& a = spec.model;
        const AgentTube& tube = design.agents[static_cast<std::size_t>(s)];
        const AgentThetaRows& rows = rt.agents[static_cast<std::size_t>(s)];
        std::vector<Vec> corners;
        if (a.p() == 0) {
            corners.emplace_back(0);
        } else {
            const Polytope local(rows.H, rows.h0);
            const auto box = local.as_box();
            if (!box) {
                rep.checked = false;
                return rep;
            }
            corners = box_vertices(box->first, box->second).vertices;
        }
        // Enumerate the neighborhood product of scaled vertices.
        const std::size_t nb = a.neighbors.size();
        std::vector<std::size_t> counts(nb), pick(nb, 0);
        for (std::size_t k = 0; k < nb; ++k) counts[k] = cfg.agents[static_cast<std::size_t>(a.neighbors[k])].X0.size();
        std::vector<Vec> products;
        while (true) {
            Vec x(a.nbhd_dim());
            for (std::size_t k = 0; k < nb; ++k) {
                const int sg = a.neighbors[k];
                x.segment(a.nbhd_offset[k], cfg.agents[static_cast<std::size_t>(sg)].model.n) =
                    design.agents[static_cast<std::size_t>(sg)].alpha_bar *
                    cfg.agents[static_cast<std::size_t>(sg)].X0.vertices[pick[k]];
            }
            products.push_back(std::move(x));
            std::size_t k = 0;
            while (k < nb && ++pick[k] == counts[k]) pick[k++] = 0;
            if (k == nb) break;
        }
        for (const Vec& th : corners) {
            const Mat Acl = a.A_of(th) + a.B_of(th) * spec.K;
            const Mat HA = tube.Hx * Acl;
            for (Eigen::Index r = 0; r < tube.Hx.rows(); ++r) {
                double worst = -INFINITY;
                for (const Vec& x : products) worst = std::max(worst, HA.row(r).dot(x));
                const double lhs = worst + tube.wbar(r);
                const double rhs = tube.alpha_bar;
                rep.checks += products.size();
                rep.worst_excess = std::max(rep.worst_excess, lhs - rhs);
                if (lhs > rhs + tol::feas) rep.violations.push_back({s, static_cast<int>(r), th, lhs, rhs});
            }
        }
    }
    return rep;
}

std::string design_report_json(const NetworkConfig& cfg, const TubeDesign& design, const GainReport& gain,
                               const TerminalReport& terminal) {
    using nlohmann::json;
    json j;
    j["config"] = cfg.name;
    j["gain"] = {{"checked", gain.checked}, {"max_spectral_radius", gain.max_radius}, {"stable", gain.stable()},
                 {"radii", gain.radii}};
    json agents = json::array();
    for (std::size_t s = 0; s < design.agents.size(); ++s) {
        const auto& t = design.agents[s];
        json a;
        a["agent"] = s;
        a["alpha_bar"] = t.alpha_bar;
        a["fbar"] = std::vector<double>(t.fbar.data(), t.fbar.data() + t.fbar.size());
        a["wbar"] = std::vector<double>(t.wbar.data(), t.wbar.data() + t.wbar.size());
        a["tube_rows"] = t.Hx.rows();
        a["tube_vertices"] = t.X0.size();
        agents.push_back(std::move(a));
    }
    j["agents"] = agents;
    json viol = json::array();
    for (std::size_t i = 0; i < terminal.violations.size() && i < 50; ++i) {
        const auto& v = terminal.violations[i];
        viol.push_back({{"agent", v.agent},
                        {"row", v.row},
                        {"theta", std::vector<double>(v.theta.data(), v.theta.data() + v.theta.size())},
                        {"lhs", v.lhs},
                        {"rhs", v.rhs}});
    }
    j["terminal_set"] = {{"checked", terminal.checked},
                         {"robustly_invariant", terminal.invariant()},
                         {"vertex_checks", terminal.checks},
                         {"worst_excess", terminal.worst_excess},
                         {"violation_count", terminal.violations.size()},
                         {"violations", viol}};
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------

namespace {

Mat dare(const Mat& A, const Mat& B, const Mat& Q, const Mat& R) {
    Mat P = Q;
    for (int it = 0; it < 100000; ++it) {
        const Mat BtP = B.transpose() * P;
        const Mat Pn = Q + A.transpose() * P * A - A.transpose() * P * B * (R + BtP * B).ldlt().solve(BtP * A);
        const double diff = (Pn - P).cwiseAbs().maxCoeff();
        P = 0.5 * (Pn + Pn.transpose());
        if (diff < 1e-13 * (1.0 + P.cwiseAbs().maxCoeff())) break;
    }
    return P;
}

// Solves A' X A - X + Q = 0.
Mat discrete_lyapunov(const Mat& A, const Mat& Q) {
    const Eigen::Index n = A.rows();
    Mat M = Mat::Identity(n * n, n * n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index k = 0; k < n; ++k)
                for (Eigen::Index l = 0; l < n; ++l) M(i * n + j, k * n + l) -= A(k, i) * A(l, j);
    Vec q(n * n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) q(i * n + j) = Q(i, j);
    const Vec x = M.fullPivLu().solve(q);
    Mat X(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) X(i, j) = x(i * n + j);
    return 0.5 * (X + X.transpose());
}

}  // namespace

void apply_reference_chain_design(NetworkConfig& cfg, int rows, double q_weight, double r_weight, double scale) {
    if (rows < 3) fail(ErrorKind::SchemaError, "tube polygon needs at least 3 rows");
    for (auto& spec : cfg.agents) {
        AgentModel& a = spec.model;
        if (a.n != 2) fail(ErrorKind::DesignMismatch, "reference design expects two states per agent");
        const int self = a.self_pos();
        const int off = a.nbhd_offset[static_cast<std::size_t>(self)];
        Vec th_nom(a.p());
        for (int i = 0; i < a.p(); ++i) th_nom(i) = cfg.theta.nominal(a.params[static_cast<std::size_t>(i)]);
        const Mat Aown = a.A_of(th_nom).middleCols(off, a.n);
        const Mat Bown = a.B_of(th_nom);
        const Mat Q = q_weight * Mat::Identity(a.n, a.n);
        const Mat R = r_weight * Mat::Identity(a.m, a.m);
        const Mat P = dare(Aown, Bown, Q, R);
        const Mat Kown = -(R + Bown.transpose() * P * Bown).ldlt().solve(Bown.transpose() * P * Aown);
        spec.K = Mat::Zero(a.m, a.nbhd_dim());
        spec.K.middleCols(off, a.n) = Kown;
        const Mat Acl = Aown + Bown * Kown;
        const Mat Pl = discrete_lyapunov(Acl, Mat::Identity(a.n, a.n));
        // Ellipse {x' Pl x <= 1} = L * unit disk with L L' = Pl^-1.
        const Mat L = Eigen::LLT<Mat>(Pl.inverse()).matrixL();
        const Mat Linv_t = L.inverse().transpose();
        Mat H(rows, 2);
        for (int t = 0; t < rows; ++t) {
            const double ang = 2.0 * std::numbers::pi * t / rows;
            Vec d(2);
            d << std::cos(ang), std::sin(ang);
            H.row(t) = (Linv_t * d).transpose();
        }
        VertexSet V;
        for (int t = 0; t < rows; ++t) {
            Mat M(2, 2);
            M.row(0) = H.row(t);
            M.row(1) = H.row((t + 1) % rows);
            V.vertices.push_back(M.partialPivLu().solve(Vec::Ones(2)));
        }
        const Mat Fcl = a.F + a.G * spec.K;
        double fmax = 0.0;
        for (Eigen::Index i = 0; i < Fcl.rows(); ++i) fmax = std::max(fmax, V.max_dot(Fcl.block(i, off, 1, a.n).transpose()));
        const double f = fmax / scale;
        spec.Hx = H * f;
        for (auto& v : V.vertices) v /= f;
        spec.X0 = std::move(V);
    }
}

}  // namespace dampc
