#include "sculpt/params.hpp"

#include <cmath>

#include "sculpt/errors.hpp"

namespace sculpt {

std::size_t ParamLayout::add(std::string name, Shape shape, bool prunable, std::size_t fan_in,
                             std::size_t fan_out) {
    if (find(name)) throw ContractError("duplicate parameter segment '" + name + "'");
    Segment s;
    s.name = std::move(name);
    s.size = shape_numel(shape);
    s.shape = std::move(shape);
    s.offset = total_;
    s.prunable = prunable;
    s.fan_in = fan_in;
    s.fan_out = fan_out;
    total_ += s.size;
    segments_.push_back(std::move(s));
    return segments_.size() - 1;
}

std::optional<std::size_t> ParamLayout::find(const std::string& name) const {
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        if (segments_[i].name == name) return i;
    }
    return std::nullopt;
}

std::size_t ParamLayout::prunable_total() const noexcept {
    std::size_t n = 0;
    for (const auto& s : segments_) {
        if (s.prunable) n += s.size;
    }
    return n;
}

std::vector<std::size_t> ParamLayout::prunable_segments() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        if (segments_[i].prunable) out.push_back(i);
    }
    return out;
}

ParamVector::ParamVector(ParamLayout l, std::vector<double> v) : layout(std::move(l)), values(std::move(v)) {
    if (values.size() != layout.total()) {
        throw ContractError("parameter vector of " + std::to_string(values.size()) +
                            " values does not match layout of " + std::to_string(layout.total()));
    }
}

std::span<double> ParamVector::segment(std::size_t i) {
    const auto& s = layout.segment(i);
    return std::span<double>(values).subspan(s.offset, s.size);
}

std::span<const double> ParamVector::segment(std::size_t i) const {
    const auto& s = layout.segment(i);
    return std::span<const double>(values).subspan(s.offset, s.size);
}

void require_same_layout(const ParamLayout& a, const ParamLayout& b, const char* what) {
    if (!(a == b)) throw ContractError(std::string(what) + ": parameter layouts differ");
}

double l2_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

}  // namespace sculpt
