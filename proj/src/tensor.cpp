#include "gsedit/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "gsedit/error.hpp"

namespace gsedit {

Tensor::Tensor(int height, int width, int channels, double fill)
    : height_(height), width_(width), channels_(channels) {
    if (height < 0 || width < 0 || channels < 0) {
        throw ContractError("tensor dimensions must be nonnegative");
    }
    data_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace gsedit
