#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "wscos/errors.hpp"

namespace wscos {

// Dense 2-D float grid, row-major. Carries images, probability masks and
// entropy maps alike; a ProbMask is a Grid whose values stay in [0, 1].
struct Grid {
    int rows = 0;
    int cols = 0;
    std::vector<double> v;

    Grid() = default;
    Grid(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<size_t>(r) * c, fill) {
        if (r <= 0 || c <= 0) throw ContractViolation("Grid: dims must be positive");
    }

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }

    size_t size() const { return v.size(); }

    bool same_dims(const Grid& o) const { return rows == o.rows && cols == o.cols; }

    bool operator==(const Grid& o) const { return rows == o.rows && cols == o.cols && v == o.v; }
};

using ProbMask = Grid;

inline void require_dims_match(const Grid& a, const Grid& b, const std::string& where) {
    if (!a.same_dims(b))
        throw ContractViolation(where + ": dims mismatch (" + std::to_string(a.rows) + "x" +
                                std::to_string(a.cols) + " vs " + std::to_string(b.rows) + "x" +
                                std::to_string(b.cols) + ")");
}

inline bool is_binary(const Grid& g) {
    for (double x : g.v)
        if (x != 0.0 && x != 1.0) return false;
    return true;
}

inline bool in_unit_range(const Grid& g) {
    for (double x : g.v)
        if (!(x >= 0.0 && x <= 1.0)) return false;
    return true;
}

// A point annotation: pixel location plus its foreground/background label.
struct LabeledPoint {
    int row = 0;
    int col = 0;
    bool foreground = true;
};

// Tri-state scribble cell.
enum class ScribbleLabel : unsigned char { unknown = 0, foreground = 1, background = 2 };

struct ScribbleGrid {
    int rows = 0;
    int cols = 0;
    std::vector<ScribbleLabel> v;

    ScribbleGrid() = default;
    ScribbleGrid(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, ScribbleLabel::unknown) {}

    ScribbleLabel& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    ScribbleLabel at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    bool empty() const { return v.empty(); }
};

// Sparse supervision: labeled points and/or a scribble grid.
struct SparseAnnotation {
    std::vector<LabeledPoint> points;
    ScribbleGrid scribble;  // empty() when absent

    bool has_scribble() const { return !scribble.empty(); }
};

}  // namespace wscos
