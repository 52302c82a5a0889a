#pragma once

// Coarse-grained reverse-mode tape. Slots are flat double arrays with a version
// counter; ops read input slots and write output slots. Forward re-runs only ops whose
// inputs changed since their last run, so a tape is recorded once and replayed.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace shseed {

class Tape {
 public:
  struct Slot {
    std::string name;
    std::vector<double> value;
    std::vector<double> grad;
    std::uint64_t version = 1;
    bool requires_grad = false;  // a parameter, or computed from one
    bool parameter = false;
  };

  int add_slot(std::string name, std::size_t size, bool parameter = false);
  /// Adds an op; it runs during the next forward(). `backward` reads output grads
  /// and accumulates into the grads of inputs that require them.
  void add_op(std::string name, std::vector<int> inputs, std::vector<int> outputs, std::function<void()> forward,
              std::function<void()> backward);

  Slot& slot(int id) { return slots_.at(id); }
  const Slot& slot(int id) const { return slots_.at(id); }
  std::span<double> value(int id) { return slots_.at(id).value; }
  std::span<double> grad(int id) { return slots_.at(id).grad; }
  bool requires_grad(int id) const { return slots_.at(id).requires_grad; }
  std::size_t slot_count() const { return slots_.size(); }
  std::size_t op_count() const { return ops_.size(); }

  /// Copies values into a slot, bumping its version only if something changed.
  void assign(int id, std::span<const double> values);
  /// Marks a slot as modified in place.
  void touch(int id) { ++slots_.at(id).version; }
  /// Selects which parameter slots receive gradients.
  void set_requires_grad(int id, bool value);

  /// Runs stale ops in recording order. Returns the names of the ops that ran.
  std::vector<std::string> forward();
  /// Zeroes all gradients, seeds `seed_slot`, and runs the adjoints of ops that feed
  /// a parameter requiring gradients, in reverse order.
  void backward(int seed_slot, std::span<const double> seed);

 private:
  struct Op {
    std::string name;
    std::vector<int> inputs, outputs;
    std::function<void()> forward, backward;
    std::vector<std::uint64_t> seen;
    bool ran = false;
  };
  void propagate();

  std::vector<Slot> slots_;
  std::vector<Op> ops_;
};

}  // namespace shseed
