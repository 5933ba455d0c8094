#include "dampc/network.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace dampc {

using nlohmann::json;

int AgentModel::self_pos() const {
    auto it = std::find(neighbors.begin(), neighbors.end(), id);
    return static_cast<int>(it - neighbors.begin());
}

int AgentModel::local_param(int global) const {
    auto it = std::find(params.begin(), params.end(), global);
    return it == params.end() ? -1 : static_cast<int>(it - params.begin());
}

Mat AgentModel::A_of(const Vec& th) const {
    Mat out = A[0];
    for (int i = 0; i < p(); ++i) out += A[static_cast<std::size_t>(i + 1)] * th(i);
    return out;
}

Mat AgentModel::B_of(const Vec& th) const {
    Mat out = B[0];
    for (int i = 0; i < p(); ++i) out += B[static_cast<std::size_t>(i + 1)] * th(i);
    return out;
}

Mat AgentModel::regressor(const Vec& x_nbhd, const Vec& u) const {
    Mat D(n, p());
    for (int i = 0; i < p(); ++i)
        D.col(i) = A[static_cast<std::size_t>(i + 1)] * x_nbhd + B[static_cast<std::size_t>(i + 1)] * u;
    return D;
}

Polytope ThetaSpec::at(double kappa) const {
    if (explicit_set) return *explicit_set;
    return Polytope::box(nominal - kappa * radius, nominal + kappa * radius);
}

Mat GlobalModel::A_of(const Vec& th) const {
    Mat out = A[0];
    for (int j = 0; j < p(); ++j) out += A[static_cast<std::size_t>(j + 1)] * th(j);
    return out;
}

Mat GlobalModel::B_of(const Vec& th) const {
    Mat out = B[0];
    for (int j = 0; j < p(); ++j) out += B[static_cast<std::size_t>(j + 1)] * th(j);
    return out;
}

Mat GlobalModel::regressor(const Vec& x, const Vec& u) const {
    Mat D(n(), p());
    for (int j = 0; j < p(); ++j)
        D.col(j) = A[static_cast<std::size_t>(j + 1)] * x + B[static_cast<std::size_t>(j + 1)] * u;
    return D;
}

void finalize_agents(std::vector<AgentSpec>& agents) {
    for (auto& a : agents) {
        auto& md = a.model;
        md.nbhd_offset.assign(1, 0);
        for (int s : md.neighbors) {
            if (s < 0 || s >= static_cast<int>(agents.size()))
                fail(ErrorKind::SchemaError, "agents[" + std::to_string(md.id) + "].neighbors references unknown agent " +
                                                 std::to_string(s));
            md.nbhd_offset.push_back(md.nbhd_offset.back() + agents[static_cast<std::size_t>(s)].model.n);
        }
    }
}

namespace {

std::string field(int agent, const char* name) {
    return "agents[" + std::to_string(agent) + "]." + name;
}

void expect_shape(const Mat& M, Eigen::Index r, Eigen::Index c, const std::string& path) {
    if (M.rows() != r || M.cols() != c) {
        std::ostringstream os;
        os << path << " has shape " << M.rows() << "x" << M.cols() << ", expected " << r << "x" << c;
        fail(ErrorKind::DimensionMismatch, os.str());
    }
}

void expect_spd(const Mat& M, const std::string& path) {
    if ((M - M.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + M.cwiseAbs().maxCoeff()))
        fail(ErrorKind::IndefiniteCostMatrix, path + " is not symmetric");
    Eigen::SelfAdjointEigenSolver<Mat> es(M);
    if (es.eigenvalues().minCoeff() <= 0.0)
        fail(ErrorKind::IndefiniteCostMatrix, path + " is not positive definite");
}

}  // namespace

void NetworkConfig::validate() const {
    const int S = num_agents();
    if (S < 1) fail(ErrorKind::SchemaError, "agents must be non-empty");
    if (horizon < 1) fail(ErrorKind::SchemaError, "horizon must be >= 1");
    if (num_params < 0) fail(ErrorKind::SchemaError, "parameters.count must be >= 0");
    if (theta.scaled() && (theta.nominal.size() != num_params || theta.radius.size() != num_params))
        fail(ErrorKind::DimensionMismatch, "parameters nominal/radius length differs from parameters.count");
    if (theta.scaled() && (theta.radius.array() < 0.0).any())
        fail(ErrorKind::SchemaError, "parameters.radius must be non-negative");
    if (!theta.scaled() && theta.explicit_set->dim() != num_params)
        fail(ErrorKind::DimensionMismatch, "parameters.theta0 dimension differs from parameters.count");
    if (theta_star) {
        if (theta_star->size() != num_params)
            fail(ErrorKind::DimensionMismatch, "parameters.theta_star has wrong length");
        if (num_params > 0 && theta0().max_violation(*theta_star) > 1e-12)
            fail(ErrorKind::SchemaError, "parameters.theta_star lies outside theta0");
    }
    if (admm.rho <= 0.0) fail(ErrorKind::SchemaError, "admm.rho must be positive");
    if (admm.iterations < 1) fail(ErrorKind::SchemaError, "admm.iterations must be >= 1");
    if (admm.tolerance <= 0.0) fail(ErrorKind::SchemaError, "admm.tolerance must be positive");
    if (admm.margin < 0.0 || admm.margin >= 0.5) fail(ErrorKind::SchemaError, "admm.margin must lie in [0, 0.5)");
    if (admm.recovery_rounds < 0) fail(ErrorKind::SchemaError, "admm.recovery_rounds must be non-negative");
    if (sim.steps < 1) fail(ErrorKind::SchemaError, "sim.steps must be >= 1");
    if (sim.seeds < 1) fail(ErrorKind::SchemaError, "sim.seeds must be >= 1");

    for (int s = 0; s < S; ++s) {
        const AgentSpec& spec = agents[static_cast<std::size_t>(s)];
        const AgentModel& a = spec.model;
        if (a.id != s) fail(ErrorKind::SchemaError, field(s, "id") + " must equal its position");
        if (a.n < 1) fail(ErrorKind::SchemaError, field(s, "state_dim") + " must be >= 1");
        if (a.m < 1) fail(ErrorKind::SchemaError, field(s, "input_dim") + " must be >= 1");
        if (!std::is_sorted(a.neighbors.begin(), a.neighbors.end()) ||
            std::adjacent_find(a.neighbors.begin(), a.neighbors.end()) != a.neighbors.end())
            fail(ErrorKind::SchemaError, field(s, "neighbors") + " must be strictly increasing");
        if (std::find(a.neighbors.begin(), a.neighbors.end(), s) == a.neighbors.end())
            fail(ErrorKind::SchemaError, field(s, "neighbors") + " must contain the agent itself");
        for (int sg : a.neighbors) {
            if (sg < 0 || sg >= S) fail(ErrorKind::SchemaError, field(s, "neighbors") + " references unknown agent");
            const auto& other = agents[static_cast<std::size_t>(sg)].model.neighbors;
            if (std::find(other.begin(), other.end(), s) == other.end())
                fail(ErrorKind::SchemaError, field(s, "neighbors") + " lists agent " + std::to_string(sg) +
                                                 " which does not list it back");
        }
        if (static_cast<int>(a.nbhd_offset.size()) != static_cast<int>(a.neighbors.size()) + 1)
            fail(ErrorKind::SchemaError, field(s, "neighbors") + " offsets not finalised");
        std::set<int> seen;
        for (int g : a.params) {
            if (g < 0 || g >= num_params) fail(ErrorKind::SchemaError, field(s, "params") + " index out of range");
            if (!seen.insert(g).second) fail(ErrorKind::SchemaError, field(s, "params") + " repeats an index");
        }
        const int nN = a.nbhd_dim();
        if (a.A.size() != a.params.size() + 1) fail(ErrorKind::DimensionMismatch, field(s, "A") + " needs p_s + 1 blocks");
        if (a.B.size() != a.params.size() + 1) fail(ErrorKind::DimensionMismatch, field(s, "B") + " needs p_s + 1 blocks");
        for (std::size_t i = 0; i < a.A.size(); ++i) {
            expect_shape(a.A[i], a.n, nN, field(s, "A") + "[" + std::to_string(i) + "]");
            expect_shape(a.B[i], a.n, a.m, field(s, "B") + "[" + std::to_string(i) + "]");
        }
        if (a.F.rows() != a.G.rows()) fail(ErrorKind::DimensionMismatch, field(s, "F") + " and G row counts differ");
        expect_shape(a.F, a.F.rows(), nN, field(s, "F"));
        expect_shape(a.G, a.F.rows(), a.m, field(s, "G"));
        if (a.w_lo.size() != a.n || a.w_hi.size() != a.n)
            fail(ErrorKind::DimensionMismatch, field(s, "w_lower/w_upper") + " length differs from state_dim");
        if ((a.w_lo.array() > a.w_hi.array()).any())
            fail(ErrorKind::SchemaError, field(s, "w_lower") + " exceeds w_upper");
        expect_shape(spec.Q, a.n, a.n, field(s, "Q"));
        expect_shape(spec.R, a.m, a.m, field(s, "R"));
        expect_shape(spec.P, a.n, a.n, field(s, "P"));
        expect_spd(spec.Q, field(s, "Q"));
        expect_spd(spec.R, field(s, "R"));
        expect_spd(spec.P, field(s, "P"));
        expect_shape(spec.K, a.m, nN, field(s, "K"));
        if (spec.Hx.rows() < 1 || spec.Hx.cols() != a.n)
            fail(ErrorKind::DimensionMismatch, field(s, "tube.H") + " must have state_dim columns");
        if (spec.X0.size() < 1) fail(ErrorKind::SchemaError, field(s, "tube.vertices") + " must be non-empty");
        for (const Vec& v : spec.X0.vertices) {
            if (v.size() != a.n) fail(ErrorKind::DimensionMismatch, field(s, "tube.vertices") + " entry has wrong length");
            if ((spec.Hx * v).maxCoeff() > 1.0 + tol::vertex)
                fail(ErrorKind::SchemaError, field(s, "tube.vertices") + " entry lies outside {H x <= 1}");
        }
        if (spec.x0.size() != a.n) fail(ErrorKind::DimensionMismatch, field(s, "x0") + " length differs from state_dim");
    }
}

// ---------------------------------------------------------------------------
// JSON

namespace {

Mat parse_matrix(const json& j, Eigen::Index cols_if_empty, const std::string& path) {
    if (!j.is_array()) fail(ErrorKind::SchemaError, path + " must be an array of rows");
    const auto r = static_cast<Eigen::Index>(j.size());
    if (r == 0) return Mat(0, cols_if_empty);
    if (!j[0].is_array()) fail(ErrorKind::SchemaError, path + " rows must be arrays");
    const auto c = static_cast<Eigen::Index>(j[0].size());
    Mat M(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
        const json& row = j[static_cast<std::size_t>(i)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c)
            fail(ErrorKind::DimensionMismatch, path + " is ragged at row " + std::to_string(i));
        for (Eigen::Index k = 0; k < c; ++k) {
            if (!row[static_cast<std::size_t>(k)].is_number())
                fail(ErrorKind::SchemaError, path + " entries must be numbers");
            M(i, k) = row[static_cast<std::size_t>(k)].get<double>();
        }
    }
    return M;
}

Vec parse_vector(const json& j, const std::string& path) {
    if (!j.is_array()) fail(ErrorKind::SchemaError, path + " must be an array");
    Vec v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) fail(ErrorKind::SchemaError, path + " entries must be numbers");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

const json& require(const json& j, const char* key, const std::string& path) {
    if (!j.is_object() || !j.contains(key)) fail(ErrorKind::SchemaError, path + "." + key + " is required");
    return j.at(key);
}

template <class T>
T get_as(const json& j, const std::string& path) {
    try {
        return j.get<T>();
    } catch (const std::exception&) {
        fail(ErrorKind::SchemaError, path + " has the wrong type");
    }
}

json matrix_json(const Mat& M) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < M.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index k = 0; k < M.cols(); ++k) row.push_back(M(i, k));
        rows.push_back(std::move(row));
    }
    return rows;
}

json vector_json(const Vec& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

}  // namespace

NetworkConfig parse_config(const std::string& text, const std::string& origin) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorKind::ParseError, origin + ": " + e.what());
    }
    NetworkConfig cfg;
    const std::string top = "config";
    if (!root.is_object()) fail(ErrorKind::SchemaError, "config root must be an object");
    cfg.name = root.value("name", std::string("network"));
    cfg.horizon = get_as<int>(require(root, "horizon", top), "horizon");

    const json& par = require(root, "parameters", top);
    cfg.num_params = get_as<int>(require(par, "count", "parameters"), "parameters.count");
    const json& th = require(par, "theta0", "parameters");
    if (th.contains("H")) {
        Mat H = parse_matrix(th.at("H"), cfg.num_params, "parameters.theta0.H");
        Vec h = parse_vector(require(th, "h", "parameters.theta0"), "parameters.theta0.h");
        if (H.cols() != cfg.num_params)
            fail(ErrorKind::DimensionMismatch, "parameters.theta0.H must have parameters.count columns");
        cfg.theta.explicit_set = Polytope(std::move(H), std::move(h), true);
    } else {
        cfg.theta.nominal = parse_vector(require(th, "nominal", "parameters.theta0"), "parameters.theta0.nominal");
        cfg.theta.radius = parse_vector(require(th, "radius", "parameters.theta0"), "parameters.theta0.radius");
    }
    if (par.contains("theta_star")) cfg.theta_star = parse_vector(par.at("theta_star"), "parameters.theta_star");

    const json& ags = require(root, "agents", top);
    if (!ags.is_array() || ags.empty()) fail(ErrorKind::SchemaError, "agents must be a non-empty array");
    for (std::size_t s = 0; s < ags.size(); ++s) {
        const json& a = ags[s];
        const std::string path = "agents[" + std::to_string(s) + "]";
        AgentSpec spec;
        AgentModel& md = spec.model;
        md.id = get_as<int>(require(a, "id", path), path + ".id");
        md.neighbors = get_as<std::vector<int>>(require(a, "neighbors", path), path + ".neighbors");
        md.n = get_as<int>(require(a, "state_dim", path), path + ".state_dim");
        md.m = get_as<int>(require(a, "input_dim", path), path + ".input_dim");
        md.params = get_as<std::vector<int>>(require(a, "params", path), path + ".params");
        for (const char* key : {"A", "B"}) {
            const json& blocks = require(a, key, path);
            if (!blocks.is_array()) fail(ErrorKind::SchemaError, path + "." + key + " must be a list of matrices");
            for (std::size_t i = 0; i < blocks.size(); ++i) {
                Mat M = parse_matrix(blocks[i], 0, path + "." + key + "[" + std::to_string(i) + "]");
                (key[0] == 'A' ? md.A : md.B).push_back(std::move(M));
            }
        }
        md.F = parse_matrix(require(a, "F", path), 0, path + ".F");
        md.G = parse_matrix(require(a, "G", path), md.m, path + ".G");
        md.w_lo = parse_vector(require(a, "w_lower", path), path + ".w_lower");
        md.w_hi = parse_vector(require(a, "w_upper", path), path + ".w_upper");
        spec.Q = parse_matrix(require(a, "Q", path), 0, path + ".Q");
        spec.R = parse_matrix(require(a, "R", path), 0, path + ".R");
        spec.P = parse_matrix(require(a, "P", path), 0, path + ".P");
        spec.K = parse_matrix(require(a, "K", path), 0, path + ".K");
        const json& tube = require(a, "tube", path);
        spec.Hx = parse_matrix(require(tube, "H", path + ".tube"), md.n, path + ".tube.H");
        const json& verts = require(tube, "vertices", path + ".tube");
        if (!verts.is_array()) fail(ErrorKind::SchemaError, path + ".tube.vertices must be an array");
        for (std::size_t j = 0; j < verts.size(); ++j)
            spec.X0.vertices.push_back(parse_vector(verts[j], path + ".tube.vertices[" + std::to_string(j) + "]"));
        spec.x0 = parse_vector(require(a, "x0", path), path + ".x0");
        cfg.agents.push_back(std::move(spec));
    }
    for (std::size_t s = 0; s < cfg.agents.size(); ++s)
        for (int nb : cfg.agents[s].model.neighbors)
            if (nb < 0 || nb >= static_cast<int>(cfg.agents.size()))
                fail(ErrorKind::SchemaError, "agents[" + std::to_string(s) + "].neighbors references unknown agent");
    finalize_agents(cfg.agents);

    if (root.contains("admm")) {
        const json& ad = root.at("admm");
        cfg.admm.rho = get_as<double>(ad.value("rho", json(cfg.admm.rho)), "admm.rho");
        cfg.admm.iterations = get_as<int>(ad.value("iterations", json(cfg.admm.iterations)), "admm.iterations");
        cfg.admm.tolerance = get_as<double>(ad.value("tolerance", json(cfg.admm.tolerance)), "admm.tolerance");
        cfg.admm.margin = get_as<double>(ad.value("margin", json(cfg.admm.margin)), "admm.margin");
        cfg.admm.recovery_rounds =
            get_as<int>(ad.value("recovery_rounds", json(cfg.admm.recovery_rounds)), "admm.recovery_rounds");
    }
    if (root.contains("sim")) {
        const json& sm = root.at("sim");
        cfg.sim.steps = get_as<int>(sm.value("steps", json(cfg.sim.steps)), "sim.steps");
        cfg.sim.seeds = get_as<int>(sm.value("seeds", json(cfg.sim.seeds)), "sim.seeds");
        cfg.sim.kappa = get_as<double>(sm.value("kappa", json(cfg.sim.kappa)), "sim.kappa");
        if (sm.contains("kappa_grid"))
            cfg.sim.kappa_grid = get_as<std::vector<double>>(sm.at("kappa_grid"), "sim.kappa_grid");
    }
    cfg.validate();
    return cfg;
}

NetworkConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::ParseError, "cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path);
}

std::string config_to_json(const NetworkConfig& cfg) {
    json root;
    root["name"] = cfg.name;
    root["horizon"] = cfg.horizon;
    json par;
    par["count"] = cfg.num_params;
    if (cfg.theta.explicit_set) {
        par["theta0"] = {{"H", matrix_json(cfg.theta.explicit_set->H())}, {"h", vector_json(cfg.theta.explicit_set->h())}};
    } else {
        par["theta0"] = {{"nominal", vector_json(cfg.theta.nominal)}, {"radius", vector_json(cfg.theta.radius)}};
    }
    if (cfg.theta_star) par["theta_star"] = vector_json(*cfg.theta_star);
    root["parameters"] = par;
    json ags = json::array();
    for (const auto& spec : cfg.agents) {
        const auto& md = spec.model;
        json a;
        a["id"] = md.id;
        a["neighbors"] = md.neighbors;
        a["state_dim"] = md.n;
        a["input_dim"] = md.m;
        a["params"] = md.params;
        a["A"] = json::array();
        for (const auto& M : md.A) a["A"].push_back(matrix_json(M));
        a["B"] = json::array();
        for (const auto& M : md.B) a["B"].push_back(matrix_json(M));
        a["F"] = matrix_json(md.F);
        a["G"] = matrix_json(md.G);
        a["w_lower"] = vector_json(md.w_lo);
        a["w_upper"] = vector_json(md.w_hi);
        a["Q"] = matrix_json(spec.Q);
        a["R"] = matrix_json(spec.R);
        a["P"] = matrix_json(spec.P);
        a["K"] = matrix_json(spec.K);
        json verts = json::array();
        for (const auto& v : spec.X0.vertices) verts.push_back(vector_json(v));
        a["tube"] = {{"H", matrix_json(spec.Hx)}, {"vertices", verts}};
        a["x0"] = vector_json(spec.x0);
        ags.push_back(std::move(a));
    }
    root["agents"] = ags;
    root["admm"] = {{"rho", cfg.admm.rho},
                    {"iterations", cfg.admm.iterations},
                    {"tolerance", cfg.admm.tolerance},
                    {"margin", cfg.admm.margin},
                    {"recovery_rounds", cfg.admm.recovery_rounds}};
    root["sim"] = {{"steps", cfg.sim.steps}, {"seeds", cfg.sim.seeds}, {"kappa", cfg.sim.kappa}};
    if (!cfg.sim.kappa_grid.empty()) root["sim"]["kappa_grid"] = cfg.sim.kappa_grid;
    return root.dump(2) + "\n";
}

std::string config_digest(const NetworkConfig& cfg) {
    const std::string text = config_to_json(cfg);
    std::uint64_t hsh = 1469598103934665603ULL;
    for (unsigned char c : text) {
        hsh ^= c;
        hsh *= 1099511628211ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << hsh;
    return os.str();
}

// ---------------------------------------------------------------------------

GlobalModel assemble_global(const NetworkConfig& cfg) {
    GlobalModel g;
    const int S = cfg.num_agents();
    g.x_offset.assign(1, 0);
    g.u_offset.assign(1, 0);
    g.z_offset.assign(1, 0);
    for (const auto& a : cfg.agents) {
        g.x_offset.push_back(g.x_offset.back() + a.model.n);
        g.u_offset.push_back(g.u_offset.back() + a.model.m);
        g.z_offset.push_back(g.z_offset.back() + static_cast<int>(a.model.F.rows()));
    }
    const int n = g.x_offset.back(), m = g.u_offset.back(), nz = g.z_offset.back();
    const int p = cfg.num_params;
    g.A.assign(static_cast<std::size_t>(p + 1), Mat::Zero(n, n));
    g.B.assign(static_cast<std::size_t>(p + 1), Mat::Zero(n, m));
    g.F = Mat::Zero(nz, n);
    g.G = Mat::Zero(nz, m);
    g.w_lo.resize(n);
    g.w_hi.resize(n);
    for (int s = 0; s < S; ++s) {
        const AgentModel& a = cfg.agents[static_cast<std::size_t>(s)].model;
        const int r0 = g.x_offset[static_cast<std::size_t>(s)];
        const int u0 = g.u_offset[static_cast<std::size_t>(s)];
        const int z0 = g.z_offset[static_cast<std::size_t>(s)];
        for (std::size_t k = 0; k < a.neighbors.size(); ++k) {
            const int sg = a.neighbors[k];
            const int c0 = g.x_offset[static_cast<std::size_t>(sg)];
            const int nc = cfg.agents[static_cast<std::size_t>(sg)].model.n;
            const int l0 = a.nbhd_offset[k];
            g.A[0].block(r0, c0, a.n, nc) = a.A[0].block(0, l0, a.n, nc);
            for (int i = 0; i < a.p(); ++i)
                g.A[static_cast<std::size_t>(a.params[static_cast<std::size_t>(i)] + 1)].block(r0, c0, a.n, nc) =
                    a.A[static_cast<std::size_t>(i + 1)].block(0, l0, a.n, nc);
            g.F.block(z0, c0, a.F.rows(), nc) = a.F.block(0, l0, a.F.rows(), nc);
        }
        g.B[0].block(r0, u0, a.n, a.m) = a.B[0];
        for (int i = 0; i < a.p(); ++i)
            g.B[static_cast<std::size_t>(a.params[static_cast<std::size_t>(i)] + 1)].block(r0, u0, a.n, a.m) =
                a.B[static_cast<std::size_t>(i + 1)];
        g.G.block(z0, u0, a.G.rows(), a.m) = a.G;
        g.w_lo.segment(r0, a.n) = a.w_lo;
        g.w_hi.segment(r0, a.n) = a.w_hi;
    }
    g.theta0 = cfg.num_params > 0 ? cfg.theta0() : Polytope();
    return g;
}

std::vector<AgentModel> split_global(const GlobalModel& g, const NetworkConfig& layout) {
    std::vector<AgentModel> out;
    for (int s = 0; s < layout.num_agents(); ++s) {
        AgentModel a = layout.agents[static_cast<std::size_t>(s)].model;
        const int r0 = g.x_offset[static_cast<std::size_t>(s)];
        const int u0 = g.u_offset[static_cast<std::size_t>(s)];
        const int z0 = g.z_offset[static_cast<std::size_t>(s)];
        const int nz = g.z_offset[static_cast<std::size_t>(s + 1)] - z0;
        const int nN = a.nbhd_dim();
        a.A.assign(a.params.size() + 1, Mat::Zero(a.n, nN));
        a.B.assign(a.params.size() + 1, Mat::Zero(a.n, a.m));
        a.F = Mat::Zero(nz, nN);
        for (std::size_t k = 0; k < a.neighbors.size(); ++k) {
            const int sg = a.neighbors[k];
            const int c0 = g.x_offset[static_cast<std::size_t>(sg)];
            const int nc = g.x_offset[static_cast<std::size_t>(sg + 1)] - c0;
            const int l0 = a.nbhd_offset[k];
            a.A[0].block(0, l0, a.n, nc) = g.A[0].block(r0, c0, a.n, nc);
            for (int i = 0; i < a.p(); ++i)
                a.A[static_cast<std::size_t>(i + 1)].block(0, l0, a.n, nc) =
                    g.A[static_cast<std::size_t>(a.params[static_cast<std::size_t>(i)] + 1)].block(r0, c0, a.n, nc);
            a.F.block(0, l0, nz, nc) = g.F.block(z0, c0, nz, nc);
        }
        a.B[0] = g.B[0].block(r0, u0, a.n, a.m);
        for (int i = 0; i < a.p(); ++i)
            a.B[static_cast<std::size_t>(i + 1)] =
                g.B[static_cast<std::size_t>(a.params[static_cast<std::size_t>(i)] + 1)].block(r0, u0, a.n, a.m);
        a.G = g.G.block(z0, u0, nz, a.m);
        a.w_lo = g.w_lo.segment(r0, a.n);
        a.w_hi = g.w_hi.segment(r0, a.n);
        out.push_back(std::move(a));
    }
    return out;
}

Vec step_truth(const GlobalModel& model, const Vec& theta_star, const Vec& x, const Vec& u, const Vec& w) {
    if (x.size() != model.n() || u.size() != model.m() || w.size() != model.n() || theta_star.size() != model.p())
        fail(ErrorKind::DimensionMismatch, "step_truth argument lengths");
    for (Eigen::Index i = 0; i < w.size(); ++i)
        if (w(i) < model.w_lo(i) - 1e-12 || w(i) > model.w_hi(i) + 1e-12)
            fail(ErrorKind::DisturbanceOutsideW, "w[" + std::to_string(i) + "] outside W");
    return model.A_of(theta_star) * x + model.B_of(theta_star) * u + w;
}

NetworkConfig build_msd_benchmark(const ChainSpec& c) {
    const auto S = static_cast<int>(c.masses.size());
    if (S < 2) fail(ErrorKind::InvalidChain, "chain needs at least two masses");
    if (c.dampers.size() != S - 1 || c.spring_nominal.size() != S - 1 || c.spring_radius.size() != S - 1)
        fail(ErrorKind::InvalidChain, "chain needs one damper and one spring per link");
    if ((c.masses.array() <= 0.0).any()) fail(ErrorKind::InvalidChain, "masses must be positive");
    if (c.h <= 0.0) fail(ErrorKind::InvalidChain, "sampling time must be positive");

    NetworkConfig cfg;
    cfg.name = "mass_spring_damper_" + std::to_string(S);
    cfg.num_params = S - 1;
    cfg.theta.nominal = c.spring_nominal;
    cfg.theta.radius = c.spring_radius;
    cfg.sim.kappa = c.kappa;
    cfg.horizon = 5;
    const double h = c.h;
    for (int s = 0; s < S; ++s) {
        AgentSpec spec;
        AgentModel& a = spec.model;
        a.id = s;
        a.n = 2;
        a.m = 1;
        if (s > 0) a.neighbors.push_back(s - 1);
        a.neighbors.push_back(s);
        if (s < S - 1) a.neighbors.push_back(s + 1);
        if (s > 0) a.params.push_back(s - 1);
        if (s < S - 1) a.params.push_back(s);
        const int nN = 2 * static_cast<int>(a.neighbors.size());
        const int self = a.self_pos();
        const double inv_m = 1.0 / c.masses(s);
        Mat A0 = Mat::Zero(2, nN);
        A0(0, 2 * self) = 1.0;
        A0(0, 2 * self + 1) = h;
        A0(1, 2 * self + 1) = 1.0;
        a.A.push_back(A0);
        for (int g : a.params) {
            // Link g joins masses g and g+1.
            const int other = (g == s) ? s + 1 : s - 1;
            const int opos = static_cast<int>(std::find(a.neighbors.begin(), a.neighbors.end(), other) - a.neighbors.begin());
            const double d = c.dampers(g);
            a.A[0](1, 2 * self + 1) -= h * d * inv_m;
            a.A[0](1, 2 * opos + 1) += h * d * inv_m;
            Mat Ai = Mat::Zero(2, nN);
            Ai(1, 2 * self) = -h * inv_m;
            Ai(1, 2 * opos) = h * inv_m;
            a.A.push_back(Ai);
        }
        Mat B0 = Mat::Zero(2, 1);
        B0(1, 0) = h * inv_m;
        a.B.assign(a.params.size() + 1, Mat::Zero(2, 1));
        a.B[0] = B0;
        a.F = Mat::Zero(6, nN);
        a.G = Mat::Zero(6, 1);
        for (int i = 0; i < 2; ++i) {
            a.F(i, 2 * self + i) = 1.0 / c.state_bound;
            a.F(2 + i, 2 * self + i) = -1.0 / c.state_bound;
        }
        a.G(4, 0) = 1.0 / c.input_bound;
        a.G(5, 0) = -1.0 / c.input_bound;
        a.w_lo = Vec::Constant(2, -c.w_bound);
        a.w_hi = Vec::Constant(2, c.w_bound);
        spec.Q = Mat::Identity(2, 2);
        spec.R = 5.0 * Mat::Identity(1, 1);
        spec.P = 100.0 * Mat::Identity(2, 2);
        spec.K = Mat::Zero(1, nN);
        spec.x0 = Vec::Zero(2);
        cfg.agents.push_back(std::move(spec));
    }
    finalize_agents(cfg.agents);
    return cfg;
}

}  // namespace dampc
