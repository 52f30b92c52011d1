#pragma once

#include <vector>

#include "wscos/grid.hpp"

namespace wscos {

// 8-connected component labeling on a binary grid. Labels are assigned in
// row-major first-encounter order: 0 = background, 1..n = blobs. Returns n.
int label_components(const Grid& binary, std::vector<int>& labels);

// Binary morphology with a square structuring element of the given Chebyshev
// radius; pixels outside the image count as background.
Grid dilate(const Grid& binary, int radius);
Grid erode(const Grid& binary, int radius);

}  // namespace wscos
