#pragma once

#include <string>

#include "rose/tensor.hpp"

namespace rose::ad::detail {

/// Wraps a freshly computed value into a graph node. The backward closure is
/// only kept when grad mode is on and at least one input requires a gradient.
Tensor make_result(const char* op, Shape shape, std::vector<double> value,
                   std::vector<Tensor> inputs, std::function<void(Node&)> backward);

inline Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }
inline bool wants(const Node& self, std::size_t i) {
  return i < self.parents.size() && self.parents[i] && self.parents[i]->requires_grad;
}

[[noreturn]] void shape_fail(const char* op, const std::string& what);
void require_rank(const char* op, const Tensor& t, std::size_t rank);
void require_same_shape(const char* op, const Tensor& a, const Tensor& b);
void require_positive_eps(const char* op, double eps);

/// Runs fn(begin, end) over [0, count) split across the configured workers.
/// Callers must only write disjoint outputs per index.
void parallel_for(std::size_t count, const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace rose::ad::detail
