#include "minnet/network.hpp"

#include <cstring>
#include <fstream>
#include <set>

namespace minnet {

namespace {

constexpr char kMagic[8] = {'M', 'I', 'N', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, std::uint64_t v) {
  put_u32(os, static_cast<std::uint32_t>(v));
  put_u32(os, static_cast<std::uint32_t>(v >> 32));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw FormatError("checkpoint: truncated file");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t get_u64(std::istream& is) {
  const std::uint64_t lo = get_u32(is);
  const std::uint64_t hi = get_u32(is);
  return lo | (hi << 32);
}

void put_f32_array(std::ostream& os, const std::vector<double>& v) {
  put_u64(os, v.size());
  for (double d : v) {
    const float f = static_cast<float>(d);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(os, bits);
  }
}

void get_f32_array(std::istream& is, std::vector<double>& out) {
  const std::uint64_t count = get_u64(is);
  if (count != out.size()) {
    throw FormatError("checkpoint: payload of " + std::to_string(count) +
                      " values where " + std::to_string(out.size()) + " expected");
  }
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::uint32_t bits = get_u32(is);
    float f;
    std::memcpy(&f, &bits, 4);
    out[i] = static_cast<double>(f);
  }
}

void put_string(std::ostream& os, const std::string& s) {
  put_u32(os, static_cast<std::uint32_t>(s.size()));
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& is) {
  const std::uint32_t len = get_u32(is);
  if (len > (1u << 20)) throw FormatError("checkpoint: implausible string length");
  std::string s(len, '\0');
  is.read(s.data(), len);
  if (!is) throw FormatError("checkpoint: truncated file");
  return s;
}

}  // namespace

Layer* Network::find(const std::string& name) {
  for (auto& l : layers_) {
    if (l->name() == name) return l.get();
  }
  return nullptr;
}

std::vector<std::string> Network::layer_names() const {
  std::vector<std::string> names;
  names.reserve(layers_.size());
  for (const auto& l : layers_) names.push_back(l->name());
  return names;
}

Tensor Network::forward(const Tensor& batch, Mode mode) {
  Tensor cur = batch;
  for (auto& l : layers_) cur = l->forward(cur, mode);
  have_train_cache_ = (mode == Mode::Train);
  return cur;
}

Tensor Network::backward(const Tensor& loss_grad) {
  if (!have_train_cache_) {
    throw InvalidState("network: backward without a matching train-mode forward (stale cache)");
  }
  Tensor cur = loss_grad;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) cur = (*it)->backward(cur);
  have_train_cache_ = false;
  return cur;
}

std::vector<int> argmax_rows(const Tensor& scores) {
  std::vector<int> labels(scores.n, 0);
  for (int in = 0; in < scores.n; ++in) {
    const double* row = scores.data.data() + static_cast<std::size_t>(in) * scores.c;
    int best = 0;
    for (int ic = 1; ic < scores.c; ++ic) {
      if (row[ic] > row[best]) best = ic;
    }
    labels[in] = best;
  }
  return labels;
}

std::vector<int> Network::predict(const Tensor& batch) {
  return argmax_rows(forward(batch, Mode::Eval));
}

Network::Tap Network::forward_tap(const Tensor& batch, const std::string& layer_name) {
  if (!find(layer_name)) {
    std::string names;
    for (const auto& n : layer_names()) names += " " + n;
    throw InvalidInput("network: unknown layer '" + layer_name + "'; available:" + names);
  }
  Tap tap;
  Tensor cur = batch;
  for (auto& l : layers_) {
    cur = l->forward(cur, Mode::Eval);
    if (l->name() == layer_name) tap.activation = cur;
  }
  tap.logits = cur;
  return tap;
}

std::vector<ParamRef> Network::params() {
  std::vector<ParamRef> out;
  for (auto& l : layers_) l->collect_params(out);
  return out;
}

std::vector<StatRef> Network::stats() {
  std::vector<StatRef> out;
  for (auto& l : layers_) l->collect_stats(out);
  return out;
}

void Network::zero_grads() {
  for (const ParamRef& p : params()) std::fill(p.grad->begin(), p.grad->end(), 0.0);
}

std::size_t Network::param_count() {
  std::size_t total = 0;
  for (const ParamRef& p : params()) total += p.value->size();
  return total;
}

void Network::save_checkpoint(const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  os.write(kMagic, 8);
  put_u32(os, static_cast<std::uint32_t>(layers_.size()));
  for (auto& l : layers_) {
    put_string(os, l->kind());
    put_string(os, l->name());
    const auto spec = l->spec_ints();
    put_u32(os, static_cast<std::uint32_t>(spec.size()));
    for (std::uint32_t v : spec) put_u32(os, v);
    std::vector<ParamRef> refs;
    l->collect_params(refs);
    put_u32(os, static_cast<std::uint32_t>(refs.size()));
    for (const ParamRef& p : refs) put_f32_array(os, *p.value);
  }
  // running statistics trail the parameter payloads
  std::vector<StatRef> stats_refs = stats();
  put_u32(os, static_cast<std::uint32_t>(stats_refs.size()));
  for (const StatRef& s : stats_refs) {
    put_string(os, s.name);
    os.put(*s.initialized ? 1 : 0);
    put_f32_array(os, *s.mean);
    put_f32_array(os, *s.var);
  }
  if (!os) throw IoError("checkpoint: write to '" + path + "' failed");
}

void Network::load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) {
    throw FormatError("checkpoint: bad magic in '" + path + "'");
  }
  const std::uint32_t count = get_u32(is);
  if (count != layers_.size()) {
    throw FormatError("checkpoint: holds " + std::to_string(count) + " layers, network has " +
                      std::to_string(layers_.size()));
  }
  for (auto& l : layers_) {
    const std::string kind = get_string(is);
    const std::string name = get_string(is);
    if (kind != l->kind() || name != l->name()) {
      throw FormatError("checkpoint: layer '" + name + "' (" + kind + ") does not match '" +
                        l->name() + "' (" + l->kind() + ")");
    }
    const std::uint32_t nspec = get_u32(is);
    const auto expect = l->spec_ints();
    if (nspec != expect.size()) throw FormatError("checkpoint: spec mismatch at '" + name + "'");
    for (std::uint32_t i = 0; i < nspec; ++i) {
      if (get_u32(is) != expect[i]) {
        throw FormatError("checkpoint: spec mismatch at '" + name + "'");
      }
    }
    std::vector<ParamRef> refs;
    l->collect_params(refs);
    const std::uint32_t nparams = get_u32(is);
    if (nparams != refs.size()) {
      throw FormatError("checkpoint: parameter count mismatch at '" + name + "'");
    }
    for (ParamRef& p : refs) get_f32_array(is, *p.value);
  }
  std::vector<StatRef> stats_refs = stats();
  const std::uint32_t nstats = get_u32(is);
  if (nstats != stats_refs.size()) throw FormatError("checkpoint: running-stat count mismatch");
  for (StatRef& s : stats_refs) {
    const std::string name = get_string(is);
    if (name != s.name) throw FormatError("checkpoint: running stats for '" + name +
                                          "' where '" + s.name + "' expected");
    const int flag = is.get();
    if (flag != 0 && flag != 1) throw FormatError("checkpoint: bad init flag");
    *s.initialized = (flag == 1);
    get_f32_array(is, *s.mean);
    get_f32_array(is, *s.var);
  }
  have_train_cache_ = false;
}

}  // namespace minnet
