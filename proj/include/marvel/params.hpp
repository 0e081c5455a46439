#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "marvel/common.hpp"
#include "marvel/rng.hpp"

namespace marvel {

enum class ParamGroup { LM, Vision, Projection, Prompts };

inline const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::LM: return "lm";
    case ParamGroup::Vision: return "vision";
    case ParamGroup::Projection: return "projection";
    case ParamGroup::Prompts: return "prompts";
  }
  return "?";
}

inline ParamGroup group_from_name(const std::string& s) {
  if (s == "lm") return ParamGroup::LM;
  if (s == "vision") return ParamGroup::Vision;
  if (s == "projection") return ParamGroup::Projection;
  if (s == "prompts") return ParamGroup::Prompts;
  throw DataError("unknown parameter group: " + s);
}

enum class InitKind { Xavier, Zero, One };

// Named parameter registry. Creation order is the single source of truth for
// seeded initialization and checkpoint layout, so model code must add
// parameters in a fixed order.
template <typename S>
class ParamStore {
 public:
  struct Entry {
    std::string name;
    ParamGroup group;
    InitKind init;
    MatX<S> value;
    MatX<S> grad;  // empty until a backward pass deposits one
  };

  Entry& add(const std::string& name, ParamGroup group, Eigen::Index rows, Eigen::Index cols,
             InitKind init = InitKind::Xavier) {
    if (by_name_.count(name)) throw ContractError("duplicate parameter name: " + name);
    Entry e;
    e.name = name;
    e.group = group;
    e.init = init;
    e.value = MatX<S>::Zero(rows, cols);
    by_name_[name] = static_cast<int>(entries_.size());
    entries_.push_back(std::move(e));
    return entries_.back();
  }

  // uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)), one generator,
  // parameters visited in creation order.
  void init_seeded(uint64_t seed) {
    Rng rng(seed);
    for (Entry& e : entries_) {
      switch (e.init) {
        case InitKind::Zero:
          e.value.setZero();
          break;
        case InitKind::One:
          e.value.setOnes();
          break;
        case InitKind::Xavier: {
          double a = std::sqrt(6.0 / static_cast<double>(e.value.rows() + e.value.cols()));
          for (Eigen::Index i = 0; i < e.value.rows(); ++i)
            for (Eigen::Index j = 0; j < e.value.cols(); ++j)
              e.value(i, j) = static_cast<S>(rng.uniform(-a, a));
          break;
        }
      }
      e.grad.resize(0, 0);
    }
  }

  bool has(const std::string& name) const { return by_name_.count(name) != 0; }

  Entry& at(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ContractError("no such parameter: " + name);
    return entries_[it->second];
  }
  const Entry& at(const std::string& name) const {
    return const_cast<ParamStore*>(this)->at(name);
  }

  std::vector<Entry>& entries() { return entries_; }
  const std::vector<Entry>& entries() const { return entries_; }

  void set_trainable(std::set<ParamGroup> groups) { trainable_ = std::move(groups); }
  const std::set<ParamGroup>& trainable_groups() const { return trainable_; }
  bool trainable(const Entry& e) const { return trainable_.count(e.group) != 0; }

  void zero_grads() {
    for (Entry& e : entries_) e.grad.resize(0, 0);
  }

  int64_t count_trainable() const {
    int64_t n = 0;
    for (const Entry& e : entries_)
      if (trainable(e)) n += e.value.size();
    return n;
  }

  // Checkpoint: "MRVL", version u32, count u32, then per parameter
  // {name_len u32, name, rank u32, dims u32 x rank, values f32 x count},
  // all little-endian, values row-major.
  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint for writing: " + path);
    f.write("MRVL", 4);
    write_u32(f, 1);
    write_u32(f, static_cast<uint32_t>(entries_.size()));
    for (const Entry& e : entries_) {
      write_u32(f, static_cast<uint32_t>(e.name.size()));
      f.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
      write_u32(f, 2);
      write_u32(f, static_cast<uint32_t>(e.value.rows()));
      write_u32(f, static_cast<uint32_t>(e.value.cols()));
      for (Eigen::Index i = 0; i < e.value.rows(); ++i)
        for (Eigen::Index j = 0; j < e.value.cols(); ++j) {
          float v = static_cast<float>(e.value(i, j));
          f.write(reinterpret_cast<const char*>(&v), 4);
        }
    }
    if (!f) throw DataError("checkpoint write failed: " + path);
  }

  // Loads values into an already-constructed store; names and dims must match
  // the model that was built from the same config.
  void load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "MRVL", 4) != 0)
      throw ParseError("bad checkpoint magic: " + path);
    uint32_t version = read_u32(f, path);
    if (version != 1) throw ParseError("unsupported checkpoint version");
    uint32_t count = read_u32(f, path);
    std::set<std::string> seen;
    for (uint32_t p = 0; p < count; ++p) {
      uint32_t nlen = read_u32(f, path);
      std::string name(nlen, '\0');
      f.read(name.data(), nlen);
      uint32_t rank = read_u32(f, path);
      if (rank != 2) throw ParseError("checkpoint rank != 2 for " + name);
      uint32_t r = read_u32(f, path);
      uint32_t c = read_u32(f, path);
      if (!by_name_.count(name))
        throw DataError("checkpoint parameter not in model: " + name);
      Entry& e = entries_[by_name_[name]];
      if (e.value.rows() != static_cast<Eigen::Index>(r) ||
          e.value.cols() != static_cast<Eigen::Index>(c))
        throw DataError("checkpoint shape mismatch for " + name);
      for (uint32_t i = 0; i < r; ++i)
        for (uint32_t j = 0; j < c; ++j) {
          float v;
          f.read(reinterpret_cast<char*>(&v), 4);
          e.value(i, j) = static_cast<S>(v);
        }
      if (!f) throw ParseError("truncated checkpoint: " + path);
      seen.insert(name);
    }
    if (seen.size() != by_name_.size())
      throw DataError("checkpoint is missing parameters");
  }

 private:
  static void write_u32(std::ofstream& f, uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  static uint32_t read_u32(std::ifstream& f, const std::string& path) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    if (!f) throw ParseError("truncated checkpoint: " + path);
    return v;
  }

  std::vector<Entry> entries_;
  std::map<std::string, int> by_name_;
  std::set<ParamGroup> trainable_;
};

// Per-phase freeze policy from the training recipe: pretraining touches only
// the visual module and projection; finetuning freezes the visual module and
// trains the language model, projection and prompt embeddings.
inline std::set<ParamGroup> trainable_for_phase(const std::string& phase) {
  if (phase == "pretrain") return {ParamGroup::Vision, ParamGroup::Projection};
  if (phase == "finetune")
    return {ParamGroup::LM, ParamGroup::Projection, ParamGroup::Prompts};
  throw DataError("unknown phase: " + phase);
}

}  // namespace marvel
