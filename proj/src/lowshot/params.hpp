#pragma once

#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "lowshot/graph.hpp"
#include "lowshot/tensor.hpp"

namespace lowshot {

// Ordered, name-addressable parameter store. Order is the contract: the
// optimizer, the checkpoint writer, and the per-iteration leaf list all walk
// it the same way.
template <class T>
class ParamSet {
public:
    Tensor<T>& add(std::string name, Tensor<T> value) {
        if (index_.count(name)) throw ConfigError("duplicate parameter name: " + name);
        index_[name] = names_.size();
        names_.push_back(std::move(name));
        values_.push_back(std::move(value));
        return values_.back();
    }

    std::size_t size() const { return values_.size(); }
    const std::string& name(std::size_t i) const { return names_[i]; }
    Tensor<T>& value(std::size_t i) { return values_[i]; }
    const Tensor<T>& value(std::size_t i) const { return values_[i]; }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    Tensor<T>& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return values_[it->second];
    }
    const Tensor<T>& at(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) throw ConfigError("unknown parameter: " + name);
        return values_[it->second];
    }

    std::int64_t total_numel() const {
        std::int64_t n = 0;
        for (const auto& v : values_) n += v.numel();
        return n;
    }

    ParamSet clone() const {
        ParamSet out;
        for (std::size_t i = 0; i < values_.size(); ++i) out.add(names_[i], values_[i].clone());
        return out;
    }

    template <class U>
    ParamSet<U> cast() const {
        ParamSet<U> out;
        for (std::size_t i = 0; i < values_.size(); ++i)
            out.add(names_[i], values_[i].template cast<U>());
        return out;
    }

private:
    std::vector<std::string> names_;
    std::vector<Tensor<T>> values_;
    std::unordered_map<std::string, std::size_t> index_;
};

// One leaf per parameter, in store order. Leaves share the parameter storage,
// so a fresh graph each iteration sees the optimizer's latest values.
template <class T>
std::vector<NodePtr<T>> make_param_leaves(const ParamSet<T>& params, bool requires_grad) {
    std::vector<NodePtr<T>> out;
    out.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i)
        out.push_back(leaf(params.value(i), requires_grad));
    return out;
}

}  // namespace lowshot
