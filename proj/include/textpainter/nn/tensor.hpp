#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "textpainter/common.hpp"

namespace textpainter::nn {

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
    int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

struct TensorData {
    Shape shape;
    std::vector<float> v;

    TensorData() = default;
    explicit TensorData(Shape s, float fill = 0.f)
        : shape(std::move(s)), v(static_cast<size_t>(numel(shape)), fill) {}
    TensorData(Shape s, std::vector<float> values) : shape(std::move(s)), v(std::move(values)) {
        check(static_cast<int64_t>(v.size()) == numel(shape), "tensor_size",
              "value count does not match shape " + shape_str(shape));
    }

    int64_t size() const { return static_cast<int64_t>(v.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape.size()); }
};

}  // namespace textpainter::nn
