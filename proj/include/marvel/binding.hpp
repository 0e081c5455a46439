#pragma once

#include <map>
#include <string>

#include "marvel/params.hpp"
#include "marvel/tape.hpp"

namespace marvel {

// Binds store parameters onto a tape for one forward/backward episode.
// Each parameter becomes a single leaf (cached), trainable only when the
// episode is a training pass and the parameter's group is unfrozen.
template <typename S>
class TapeBinding {
 public:
  TapeBinding(Tape<S>& tape, ParamStore<S>& store, bool train_mode)
      : tape_(tape), store_(store), train_mode_(train_mode) {}

  Var<S> use(const std::string& name) {
    auto it = vars_.find(name);
    if (it != vars_.end()) return it->second;
    auto& e = store_.at(name);
    bool rg = train_mode_ && store_.trainable(e);
    Var<S> v = tape_.leaf(e.value, rg);
    vars_.emplace(name, v);
    return v;
  }

  // After backward: accumulate tape gradients into the store. Frozen
  // parameters were non-requires-grad leaves, so their grads stay empty.
  void harvest_grads() {
    for (auto& [name, var] : vars_) {
      if (!tape_.has_grad(var)) continue;
      auto& e = store_.at(name);
      if (e.grad.size() == 0) e.grad = MatX<S>::Zero(e.value.rows(), e.value.cols());
      e.grad += tape_.grad(var);
    }
  }

  Tape<S>& tape() { return tape_; }
  ParamStore<S>& store() { return store_; }
  bool train_mode() const { return train_mode_; }

 private:
  Tape<S>& tape_;
  ParamStore<S>& store_;
  bool train_mode_;
  std::map<std::string, Var<S>> vars_;
};

}  // namespace marvel
