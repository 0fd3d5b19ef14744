#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "svgan/rng.hpp"
#include "svgan/tensor.hpp"

namespace svgan {

template <typename T>
struct NamedParam {
    std::string name;
    Tensor<T> tensor;
};

/// Ordered collection of named trainable leaves. Registration order is the
/// serialization order, so it must be deterministic.
template <typename T>
class ParamRegistry {
public:
    /// Truncated-normal init (stddev 0.02 by default, resampled beyond two
    /// standard deviations).
    Tensor<T> add(std::string name, Shape shape, Rng& rng, double stddev = 0.02) {
        std::vector<T> data(shape_size(shape));
        for (auto& v : data) v = static_cast<T>(rng.truncated_normal(stddev));
        return add_raw(std::move(name), std::move(shape), std::move(data));
    }

    Tensor<T> add_const(std::string name, Shape shape, T value) {
        std::vector<T> data(shape_size(shape), value);
        return add_raw(std::move(name), std::move(shape), std::move(data));
    }

    Tensor<T> add_raw(std::string name, Shape shape, std::vector<T> data) {
        for (const auto& item : items_) {
            if (item.name == name) {
                throw ValidationError("param registry: duplicate name '" + name + "'");
            }
        }
        Tensor<T> t = Tensor<T>::param(std::move(shape), std::move(data));
        items_.push_back({std::move(name), t});
        return t;
    }

    const std::vector<NamedParam<T>>& items() const { return items_; }
    std::vector<NamedParam<T>>& items() { return items_; }

    const NamedParam<T>* find(const std::string& name) const {
        for (const auto& item : items_) {
            if (item.name == name) return &item;
        }
        return nullptr;
    }

    std::size_t total_size() const {
        std::size_t n = 0;
        for (const auto& item : items_) n += item.tensor.size();
        return n;
    }

    void zero_grad() {
        for (auto& item : items_) item.tensor.zero_grad();
    }

private:
    std::vector<NamedParam<T>> items_;
};

} // namespace svgan
