#pragma once

#include "dampc/common.hpp"

#include <optional>

namespace dampc {

// {x | H x <= h}
class Polytope {
public:
    Polytope() = default;
    // Throws DimensionMismatch on shape errors or an all-zero row. With
    // compact = true, also throws Unbounded unless every +-e_i support is finite.
    Polytope(Mat H, Vec h, bool compact = false);

    static Polytope box(const Vec& lo, const Vec& hi);

    const Mat& H() const { return H_; }
    const Vec& h() const { return h_; }
    Eigen::Index dim() const { return H_.cols(); }
    Eigen::Index rows() const { return H_.rows(); }

    bool contains(const Vec& x, double tol = tol::vertex) const;
    double max_violation(const Vec& x) const;

    // Lower/upper bounds when every row is +-e_i (each coordinate bounded both
    // ways); empty otherwise.
    std::optional<std::pair<Vec, Vec>> as_box() const;

private:
    Mat H_;
    Vec h_;
};

struct VertexSet {
    std::vector<Vec> vertices;

    std::size_t size() const { return vertices.size(); }
    double max_dot(const Vec& c) const;
};

// max_{x in P} c'x via LP. Throws Unbounded or Infeasible.
double support_value(const Polytope& P, const Vec& c);

// 2^d corners, coordinate i at lo or hi; bit i of the index selects hi.
// Throws DimensionTooLarge for d > 12.
VertexSet box_vertices(const Vec& lo, const Vec& hi);

// Box support: sum_i max(c_i lo_i, c_i hi_i).
double box_support(const Vec& lo, const Vec& hi, const Vec& c);

}  // namespace dampc
