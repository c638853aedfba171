#include "avae/autodiff.hpp"

#include "avae/errors.hpp"
#include "avae/kernels.hpp"

namespace avae {

void ParamStore::add(const std::string& name, Tensor value) {
  if (values_.count(name)) throw ContractError("duplicate parameter '" + name + "'");
  order_.push_back(name);
  values_.emplace(name, std::move(value));
}

const Tensor& ParamStore::get(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParamStore::element_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : values_) n += t.size();
  return n;
}

Gradients ParamStore::zero_gradients() const {
  Gradients g;
  for (const auto& [name, t] : values_) g.emplace(name, Tensor(t.shape()));
  return g;
}

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->value(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad(id_); }

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericFault("non-finite constant fed to tape");
  nodes_.push_back(Node{"constant", std::move(value), {}, nullptr, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(const std::string& name, const Tensor& value) {
  if (auto it = params_.find(name); it != params_.end()) return Var(this, it->second);
  if (!value.all_finite()) throw NumericFault("parameter '" + name + "' is not finite");
  nodes_.push_back(Node{"param:" + name, value, {}, nullptr, true});
  params_.emplace(name, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string op, Tensor value, std::vector<Var> parents, Backward backward) {
  if (!value.all_finite()) {
    throw NumericFault("non-finite output from op '" + op + "' with shape " +
                       shape_str(value.shape()));
  }
  Node node;
  node.op = std::move(op);
  node.value = std::move(value);
  for (const Var& p : parents) {
    if (p.tape_ != this) throw ContractError("op '" + node.op + "' mixes tapes");
    node.parents.push_back(p.id_);
    node.requires_grad = node.requires_grad || nodes_[p.id_].requires_grad;
  }
  if (node.requires_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Gradients Tape::backward(const Var& loss) const {
  if (loss.tape_ != this) throw ContractError("loss recorded on a different tape");
  if (nodes_.empty()) throw ContractError("backward on an empty tape");
  const Tensor& lv = nodes_[loss.id_].value;
  if (!lv.is_scalar()) {
    throw ContractError("backward needs a scalar loss, got shape " + shape_str(lv.shape()));
  }

  const auto& kern = kernels::active();
  std::vector<Tensor> grads(loss.id_ + 1);
  std::vector<bool> has(loss.id_ + 1, false);
  grads[loss.id_] = Tensor(lv.shape(), 1.0);
  has[loss.id_] = true;

  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    const Node& node = nodes_[id];
    if (!has[id] || !node.backward) continue;
    std::vector<bool> needs(node.parents.size());
    for (std::size_t i = 0; i < node.parents.size(); ++i) {
      needs[i] = nodes_[node.parents[i]].requires_grad;
    }
    std::vector<Tensor> local = node.backward(grads[id], needs);
    for (std::size_t i = 0; i < node.parents.size(); ++i) {
      if (!needs[i]) continue;
      const std::size_t pid = node.parents[i];
      Tensor& g = local.at(i);
      if (g.size() != nodes_[pid].value.size()) {
        throw ContractError("op '" + node.op + "' produced gradient of shape " +
                            shape_str(g.shape()) + " for parent of shape " +
                            shape_str(nodes_[pid].value.shape()));
      }
      if (!has[pid]) {
        grads[pid] = std::move(g).reshaped(nodes_[pid].value.shape());
        has[pid] = true;
      } else {
        kern.add(g.size(), grads[pid].raw(), g.raw(), grads[pid].raw());
      }
    }
    // Intermediate gradients are no longer needed once propagated.
    if (node.op.rfind("param:", 0) != 0) grads[id] = Tensor();
  }

  Gradients out;
  for (const auto& [name, id] : params_) {
    if (id <= loss.id_ && has[id]) {
      out.emplace(name, std::move(grads[id]));
    } else {
      out.emplace(name, Tensor(nodes_[id].value.shape()));
    }
  }
  return out;
}

Gradients Tape::backward(const Var& loss, const ParamStore& all) const {
  Gradients out = backward(loss);
  for (const auto& name : all.names()) {
    if (!out.count(name)) out.emplace(name, Tensor(all.get(name).shape()));
  }
  return out;
}

Var ParamBinding::operator()(const std::string& name) const {
  return trainable_ ? tape_->parameter(name, store_->get(name)) : tape_->constant(store_->get(name));
}

}  // namespace avae
