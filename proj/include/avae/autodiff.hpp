#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "avae/tensor.hpp"

namespace avae {

using Gradients = std::map<std::string, Tensor>;

/// Named trainable tensors in insertion order.
class ParamStore {
 public:
  void add(const std::string& name, Tensor value);
  bool contains(const std::string& name) const { return values_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);
  const std::vector<std::string>& names() const noexcept { return order_; }
  std::size_t size() const noexcept { return order_.size(); }
  std::size_t element_count() const;

  Gradients zero_gradients() const;

  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.order_ == b.order_ && a.values_ == b.values_;
  }

 private:
  std::vector<std::string> order_;
  std::map<std::string, Tensor> values_;
};

class Tape;

/// Handle to a value recorded on a tape.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }
  bool requires_grad() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Dynamic reverse-mode record.
///
/// Nodes are appended in evaluation order, so ids are already a topological
/// order; backward walks ids downward and visits each node once. A tape is
/// used by one thread and rebuilt for each forward pass.
class Tape {
 public:
  /// Computes the gradient for each parent from the output gradient.
  /// `needs[i]` is false for parents that do not require a gradient; the
  /// corresponding entry may be left empty.
  using Backward =
      std::function<std::vector<Tensor>(const Tensor& grad_out, const std::vector<bool>& needs)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf that receives a gradient under `name`. Registering the same name
  /// twice returns the existing node.
  Var parameter(const std::string& name, const Tensor& value);

  /// Appends an op result. Throws NumericFault if `value` is not finite.
  Var record(std::string op, Tensor value, std::vector<Var> parents, Backward backward);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  const std::string& op(std::size_t id) const { return nodes_.at(id).op; }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient of a scalar loss for every parameter registered on this tape
  /// (zero for parameters the loss does not reach).
  Gradients backward(const Var& loss) const;
  /// As above, additionally filling zeros for store entries never registered.
  Gradients backward(const Var& loss, const ParamStore& all) const;

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> parents;
    Backward backward;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<std::string, std::size_t> params_;
};

/// Resolves parameter names on a tape, either as trainable leaves or as
/// frozen constants (the latter never show up in the gradient map).
class ParamBinding {
 public:
  ParamBinding(Tape& tape, const ParamStore& store, bool trainable)
      : tape_(&tape), store_(&store), trainable_(trainable) {}

  Var operator()(const std::string& name) const;
  Tape& tape() const { return *tape_; }
  bool trainable() const noexcept { return trainable_; }

 private:
  Tape* tape_;
  const ParamStore* store_;
  bool trainable_;
};

}  // namespace avae
