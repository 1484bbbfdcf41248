#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sculpt/tensor.hpp"

namespace sculpt {

// One named parameter tensor inside the flat parameter vector.
struct Segment {
    std::string name;
    Shape shape;
    std::size_t offset = 0;
    std::size_t size = 0;
    bool prunable = false;
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;

    friend bool operator==(const Segment&, const Segment&) = default;
};

// Segmentation of the flat parameter array. Offsets tile [0, total) in order.
class ParamLayout {
public:
    std::size_t add(std::string name, Shape shape, bool prunable, std::size_t fan_in = 0,
                    std::size_t fan_out = 0);

    const std::vector<Segment>& segments() const noexcept { return segments_; }
    const Segment& segment(std::size_t i) const { return segments_.at(i); }
    std::size_t segment_count() const noexcept { return segments_.size(); }
    std::optional<std::size_t> find(const std::string& name) const;

    std::size_t total() const noexcept { return total_; }
    std::size_t prunable_total() const noexcept;
    std::vector<std::size_t> prunable_segments() const;

    friend bool operator==(const ParamLayout&, const ParamLayout&) = default;

private:
    std::vector<Segment> segments_;
    std::size_t total_ = 0;
};

// Flat view of all trainable parameters.
struct ParamVector {
    ParamLayout layout;
    std::vector<double> values;

    ParamVector() = default;
    explicit ParamVector(ParamLayout l) : layout(std::move(l)), values(layout.total(), 0.0) {}
    ParamVector(ParamLayout l, std::vector<double> v);

    std::size_t size() const noexcept { return values.size(); }
    std::span<double> segment(std::size_t i);
    std::span<const double> segment(std::size_t i) const;

    friend bool operator==(const ParamVector&, const ParamVector&) = default;
};

// Throws ContractError unless both layouts are identical.
void require_same_layout(const ParamLayout& a, const ParamLayout& b, const char* what);

double l2_norm(std::span<const double> v);

}  // namespace sculpt
