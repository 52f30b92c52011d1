#include "wscos/blob.hpp"

#include <algorithm>

namespace wscos {

int label_components(const Grid& binary, std::vector<int>& labels) {
    labels.assign(binary.size(), 0);
    int next = 0;
    std::vector<size_t> stack;
    for (int r = 0; r < binary.rows; ++r) {
        for (int c = 0; c < binary.cols; ++c) {
            const size_t idx = static_cast<size_t>(r) * binary.cols + c;
            if (binary.v[idx] == 0.0 || labels[idx] != 0) continue;
            labels[idx] = ++next;
            stack.assign(1, idx);
            while (!stack.empty()) {
                const size_t cur = stack.back();
                stack.pop_back();
                const int cr = static_cast<int>(cur) / binary.cols;
                const int cc = static_cast<int>(cur) % binary.cols;
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        const int nr = cr + dr, nc = cc + dc;
                        if (nr < 0 || nr >= binary.rows || nc < 0 || nc >= binary.cols) continue;
                        const size_t nidx = static_cast<size_t>(nr) * binary.cols + nc;
                        if (binary.v[nidx] != 0.0 && labels[nidx] == 0) {
                            labels[nidx] = next;
                            stack.push_back(nidx);
                        }
                    }
            }
        }
    }
    return next;
}

Grid dilate(const Grid& binary, int radius) {
    if (radius < 0) throw ContractViolation("dilate: negative radius");
    if (radius == 0) return binary;
    Grid out(binary.rows, binary.cols);
    for (int r = 0; r < binary.rows; ++r)
        for (int c = 0; c < binary.cols; ++c) {
            if (binary.at(r, c) == 0.0) continue;
            const int r0 = std::max(0, r - radius), r1 = std::min(binary.rows - 1, r + radius);
            const int c0 = std::max(0, c - radius), c1 = std::min(binary.cols - 1, c + radius);
            for (int rr = r0; rr <= r1; ++rr)
                for (int cc = c0; cc <= c1; ++cc) out.at(rr, cc) = 1.0;
        }
    return out;
}

Grid erode(const Grid& binary, int radius) {
    if (radius < 0) throw ContractViolation("erode: negative radius");
    if (radius == 0) return binary;
    Grid out(binary.rows, binary.cols);
    for (int r = 0; r < binary.rows; ++r)
        for (int c = 0; c < binary.cols; ++c) {
            bool keep = true;
            for (int rr = r - radius; keep && rr <= r + radius; ++rr)
                for (int cc = c - radius; keep && cc <= c + radius; ++cc)
                    if (rr < 0 || rr >= binary.rows || cc < 0 || cc >= binary.cols ||
                        binary.at(rr, cc) == 0.0)
                        keep = false;
            out.at(r, c) = keep ? 1.0 : 0.0;
        }
    return out;
}

}  // namespace wscos
