#pragma once

// Helpers shared by the controller translation units.

#include "dampc/controller.hpp"

#include <limits>

namespace dampc::detail {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

inline std::size_t at(int i) { return static_cast<std::size_t>(i); }

// Per-agent quantities that depend on Theta_k,s but not on the decision.
struct AgentStep {
    const AgentSpec* spec = nullptr;
    const AgentModel* a = nullptr;
    const AgentTube* tube = nullptr;
    std::vector<Vec> thetas;  // vertices of Theta_k,s
    std::vector<Mat> Acl;     // A(theta) + B(theta) K per vertex
    std::vector<Mat> Bv;      // B(theta) per vertex
    std::vector<Mat> c;       // n_x x |N_s|: max over neighbor tube vertices of H_r Acl block
};

inline void require_nonempty(const ParamSet& ps) {
    if (ps.dim() == 0) return;
    if (ps.rows->axis_aligned()) {
        const Vec lo = ps.lower(), hi = ps.upper();
        for (Eigen::Index i = 0; i < ps.dim(); ++i)
            if (lo(i) > hi(i))
                fail(ErrorKind::EmptyParamSet, "agent " + std::to_string(ps.agent) + ": parameter set is empty");
        return;
    }
    try {
        support_value(ps.polytope(), Vec::Zero(ps.dim()));
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Infeasible)
            fail(ErrorKind::EmptyParamSet, "agent " + std::to_string(ps.agent) + ": parameter set is empty");
        throw;
    }
}

inline std::vector<Vec> theta_vertices(const ParamSet& ps) {
    if (ps.dim() == 0) return {Vec(0)};
    if (!ps.rows->axis_aligned() || ps.rows->H.rows() != 2 * ps.dim())
        fail(ErrorKind::DesignMismatch,
             "agent " + std::to_string(ps.agent) + ": vertex enumeration needs a box parameter set");
    return box_vertices(ps.lower(), ps.upper()).vertices;
}

inline void check_view(const StepView& st) {
    const int S = st.cfg.num_agents();
    if (static_cast<int>(st.design.agents.size()) != S || static_cast<int>(st.sets.size()) != S ||
        static_cast<int>(st.theta_hat.size()) != S)
        fail(ErrorKind::DesignMismatch, "per-agent inputs do not match the network size");
    if (st.x.size() != st.model.n()) fail(ErrorKind::DesignMismatch, "state length does not match the network");
    for (int s = 0; s < S; ++s) {
        const AgentModel& a = st.cfg.agents[at(s)].model;
        if (st.theta_hat[at(s)].size() != a.p() || st.sets[at(s)].dim() != a.p())
            fail(ErrorKind::DesignMismatch, "agent " + std::to_string(s) + ": parameter dimension mismatch");
        const AgentTube& t = st.design.agents[at(s)];
        if (t.Hx.cols() != a.n || t.K.rows() != a.m || t.K.cols() != a.nbhd_dim() ||
            t.fbar_nb.cols() != static_cast<Eigen::Index>(a.neighbors.size()))
            fail(ErrorKind::DesignMismatch, "agent " + std::to_string(s) + ": tube design dimensions");
    }
}

inline AgentStep prepare(const StepView& st, int s, bool vertices) {
    AgentStep out;
    out.spec = &st.cfg.agents[at(s)];
    out.a = &out.spec->model;
    out.tube = &st.design.agents[at(s)];
    require_nonempty(st.sets[at(s)]);
    if (!vertices) return out;
    const AgentModel& a = *out.a;
    const Mat& Hx = out.tube->Hx;
    out.thetas = theta_vertices(st.sets[at(s)]);
    for (const Vec& th : out.thetas) {
        const Mat B = a.B_of(th);
        const Mat Acl = a.A_of(th) + B * out.tube->K;
        const Mat HA = Hx * Acl;
        Mat c(Hx.rows(), static_cast<Eigen::Index>(a.neighbors.size()));
        for (std::size_t k = 0; k < a.neighbors.size(); ++k) {
            const VertexSet& X0 = st.design.agents[at(a.neighbors[k])].X0;
            const int nk = a.nbhd_offset[k + 1] - a.nbhd_offset[k];
            for (Eigen::Index r = 0; r < Hx.rows(); ++r)
                c(r, static_cast<Eigen::Index>(k)) = X0.max_dot(HA.row(r).segment(a.nbhd_offset[k], nk).transpose());
        }
        out.Acl.push_back(Acl);
        out.Bv.push_back(B);
        out.c.push_back(std::move(c));
    }
    return out;
}

inline int combo_count(const NetworkConfig& cfg, const TubeDesign& design, const std::vector<int>& agents) {
    long long J = 1;
    for (int sg : agents) {
        J *= static_cast<long long>(design.agents[at(sg)].X0.size());
        if (J > (1LL << 24)) fail(ErrorKind::DimensionTooLarge, "too many tube vertex combinations");
    }
    (void)cfg;
    return static_cast<int>(J);
}

// Vertex index of each listed agent in combination j; the first agent varies fastest.
inline std::vector<int> decode_combo(const TubeDesign& design, const std::vector<int>& agents, int j) {
    std::vector<int> idx(agents.size());
    for (std::size_t k = 0; k < agents.size(); ++k) {
        const int q = static_cast<int>(design.agents[at(agents[k])].X0.size());
        idx[k] = j % q;
        j /= q;
    }
    return idx;
}

inline LocalLayout make_layout(const NetworkConfig& cfg, const TubeDesign& design, int s, const ParamSet& ps,
                        TubeForm form) {
    const AgentModel& a = cfg.agents[at(s)].model;
    LocalLayout L;
    L.N = cfg.horizon;
    L.m = a.m;
    L.seg_offset.push_back(0);
    for (int sg : a.neighbors) {
        const int n = cfg.agents[at(sg)].model.n;
        L.dims.push_back(n);
        L.seg_offset.push_back(L.seg_offset.back() + shared_segment_size(n, L.N));
    }
    L.v_offset = L.copies();
    L.xN_offset = L.v_offset + L.N * a.m;
    L.lambda_offset = L.xN_offset + a.n;
    L.size = L.lambda_offset;
    if (form == TubeForm::Literal) {
        L.lambda_rows = static_cast<int>(design.agents[at(s)].Hx.rows());
        L.lambda_cols = static_cast<int>(ps.rows->H.rows());
        L.combos = combo_count(cfg, design, a.neighbors);
        L.size += L.N * L.combos * L.lambda_rows * L.lambda_cols;
    }
    return L;
}

// Row collector for one constraint matrix.
class RowSet {
public:
    explicit RowSet(Eigen::Index cols) : cols_(cols) {}
    Eigen::Index size() const { return static_cast<Eigen::Index>(rhs_.size()); }
    Eigen::Index cols() const { return cols_; }
    // Returns the coefficient row of a new constraint.
    Vec& add(double rhs) {
        rows_.push_back(Vec::Zero(cols_));
        rhs_.push_back(rhs);
        return rows_.back();
    }
    double& rhs_back() { return rhs_.back(); }
    void begin(std::vector<ConstraintFamily>& fam, const std::string& name, bool eq) {
        fam.push_back({name, eq, size(), 0});
    }
    void end(std::vector<ConstraintFamily>& fam) { fam.back().rows = size() - fam.back().begin; }
    void finish(Mat& A, Vec& b) const {
        A.resize(size(), cols_);
        b.resize(size());
        for (Eigen::Index i = 0; i < size(); ++i) {
            A.row(i) = rows_[at(static_cast<int>(i))].transpose();
            b(i) = rhs_[at(static_cast<int>(i))];
        }
    }

private:
    Eigen::Index cols_;
    std::vector<Vec> rows_;
    std::vector<double> rhs_;
};

inline Vec own_state(const StepView& st, int s) { return own_slice(st.model, st.model.x_offset, s, st.x); }

inline double quad(const Vec& x, const Mat& M) { return x.dot(M * x); }

}  // namespace dampc::detail
