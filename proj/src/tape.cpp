#include "shseed/tape.hpp"

#include "shseed/common.hpp"

#include <algorithm>

namespace shseed {

int Tape::add_slot(std::string name, std::size_t size, bool parameter) {
  Slot s;
  s.name = std::move(name);
  s.value.assign(size, 0.0);
  s.grad.assign(size, 0.0);
  s.parameter = parameter;
  slots_.push_back(std::move(s));
  return static_cast<int>(slots_.size()) - 1;
}

void Tape::add_op(std::string name, std::vector<int> inputs, std::vector<int> outputs, std::function<void()> forward,
                  std::function<void()> backward) {
  for (int id : inputs) slot(id);
  for (int id : outputs) {
    if (slot(id).parameter) throw ConfigError("op '" + name + "' writes a parameter slot");
    for (const Op& op : ops_) {
      if (std::find(op.outputs.begin(), op.outputs.end(), id) != op.outputs.end()) {
        throw ConfigError("slot '" + slot(id).name + "' written by two ops");
      }
    }
  }
  Op op{std::move(name), std::move(inputs), std::move(outputs), std::move(forward), std::move(backward), {}, false};
  op.seen.assign(op.inputs.size(), 0);
  ops_.push_back(std::move(op));
  propagate();
}

void Tape::assign(int id, std::span<const double> values) {
  Slot& s = slot(id);
  if (values.size() != s.value.size()) throw ConfigError("slot '" + s.name + "' size mismatch");
  if (!std::equal(values.begin(), values.end(), s.value.begin())) {
    std::copy(values.begin(), values.end(), s.value.begin());
    ++s.version;
  }
}

void Tape::set_requires_grad(int id, bool value) {
  if (!slot(id).parameter) throw ConfigError("only parameter slots can be marked for gradients");
  slot(id).requires_grad = value;
  propagate();
}

void Tape::propagate() {
  for (Slot& s : slots_) {
    if (!s.parameter) s.requires_grad = false;
  }
  for (const Op& op : ops_) {
    const bool any = std::any_of(op.inputs.begin(), op.inputs.end(), [&](int id) { return slots_[id].requires_grad; });
    for (int id : op.outputs) slots_[id].requires_grad = slots_[id].requires_grad || any;
  }
}

std::vector<std::string> Tape::forward() {
  std::vector<std::string> ran;
  for (Op& op : ops_) {
    bool stale = !op.ran;
    for (std::size_t i = 0; i < op.inputs.size() && !stale; ++i) stale = slots_[op.inputs[i]].version != op.seen[i];
    if (!stale) continue;
    op.forward();
    for (std::size_t i = 0; i < op.inputs.size(); ++i) op.seen[i] = slots_[op.inputs[i]].version;
    for (int id : op.outputs) ++slots_[id].version;
    op.ran = true;
    ran.push_back(op.name);
  }
  return ran;
}

void Tape::backward(int seed_slot, std::span<const double> seed) {
  Slot& target = slot(seed_slot);
  if (seed.size() != target.value.size()) throw ConfigError("gradient seed size does not match slot '" + target.name + "'");
  for (const Op& op : ops_) {
    if (!op.ran) throw ConfigError("backward before forward");
  }
  for (Slot& s : slots_) std::fill(s.grad.begin(), s.grad.end(), 0.0);
  std::copy(seed.begin(), seed.end(), target.grad.begin());
  for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) {
    const bool needed = std::any_of(it->inputs.begin(), it->inputs.end(), [&](int id) { return slots_[id].requires_grad; });
    if (needed && it->backward) it->backward();
  }
}

}  // namespace shseed
