// Copyright 2026 The npmt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "npmt/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace npmt {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& k, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kConfig, "config: " + k + "=" + v + " is not a number");
  }
}

std::uint64_t parse_u64(const std::string& k, const std::string& v) {
  try {
    std::size_t used = 0;
    if (v.empty() || v[0] == '-') throw std::invalid_argument(v);
    const auto d = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw Error(ErrorCode::kConfig, "config: " + k + "=" + v + " is not an unsigned integer");
  }
}

const std::set<std::string>& model_keys() {
  static const std::set<std::string> keys = [] {
    std::set<std::string> s;
    for (const auto& [k, v] : ModelConfig{}.to_map()) s.insert(k);
    return s;
  }();
  return keys;
}

}  // namespace

// ---------------------------------------------------------------- config

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw Error(ErrorCode::kConfig, "lr must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw Error(ErrorCode::kConfig, "Adam betas must be in [0,1)");
  if (!(eps > 0.0)) throw Error(ErrorCode::kConfig, "eps must be > 0");
  if (batch_size == 0) throw Error(ErrorCode::kConfig, "batch_size must be >= 1");
  if (!(clip_norm > 0.0)) throw Error(ErrorCode::kConfig, "clip_norm must be > 0");
  if (model.max_segment_len == 0) throw Error(ErrorCode::kConfig, "max_segment_len must be >= 1");
  if (model.window % 2 == 0) throw Error(ErrorCode::kConfig, "window must be odd");
}

std::map<std::string, std::string> TrainConfig::to_map() const {
  auto kv = model.to_map();
  kv["lr"] = fmt_double(lr);
  kv["beta1"] = fmt_double(beta1);
  kv["beta2"] = fmt_double(beta2);
  kv["eps"] = fmt_double(eps);
  kv["batch_size"] = std::to_string(batch_size);
  kv["epochs"] = std::to_string(epochs);
  kv["clip_norm"] = fmt_double(clip_norm);
  kv["seed"] = std::to_string(seed);
  kv["max_len"] = std::to_string(max_len);
  kv["halve_on_plateau"] = halve_on_plateau ? "1" : "0";
  kv["time_budget_s"] = fmt_double(time_budget_s);
  kv["stop_exact_match"] = fmt_double(stop_exact_match);
  kv["dropout"] = fmt_double(model.dropout);
  return kv;
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  std::map<std::string, std::string> model_kv;
  for (const auto& [k, v] : kv) {
    if (model_keys().count(k)) {
      model_kv[k] = v;
    } else if (k == "lr") {
      c.lr = parse_double(k, v);
    } else if (k == "beta1") {
      c.beta1 = parse_double(k, v);
    } else if (k == "beta2") {
      c.beta2 = parse_double(k, v);
    } else if (k == "eps") {
      c.eps = parse_double(k, v);
    } else if (k == "batch_size") {
      c.batch_size = parse_u64(k, v);
    } else if (k == "epochs") {
      c.epochs = parse_u64(k, v);
    } else if (k == "clip_norm") {
      c.clip_norm = parse_double(k, v);
    } else if (k == "seed") {
      c.seed = parse_u64(k, v);
    } else if (k == "max_len") {
      c.max_len = parse_u64(k, v);
    } else if (k == "halve_on_plateau") {
      c.halve_on_plateau = v == "1" || v == "true";
    } else if (k == "time_budget_s") {
      c.time_budget_s = parse_double(k, v);
    } else if (k == "stop_exact_match") {
      c.stop_exact_match = parse_double(k, v);
    } else {
      throw Error(ErrorCode::kConfig, "config: unknown key '" + k + "'");
    }
  }
  c.model = ModelConfig::from_map(model_kv);
  return c;
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream is(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(is, line);) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::kParse, "config line " + std::to_string(lineno) + ": expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorCode::kIo, "cannot open " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_map(parse_key_values(ss.str()));
}

// ---------------------------------------------------------------- Adam

template <typename Real>
void zero_model(Model<Real>& m) {
  visit_model(m, [](const std::string&, Array<Real>& a) { a.fill(Real(0)); });
}

template <typename Real>
AdamState<Real> make_adam(const Model<Real>& params) {
  AdamState<Real> s{make_model<Real>(params.cfg), make_model<Real>(params.cfg), 0};
  return s;
}

template <typename Real>
void adam_update(std::span<Real> param, std::span<const Real> grad, std::span<Real> m,
                 std::span<Real> v, std::size_t t, const TrainConfig& cfg) {
  if (t == 0) throw Error(ErrorCode::kInvalidArgument, "adam: step must be >= 1");
  if (param.size() != grad.size() || m.size() != grad.size() || v.size() != grad.size())
    throw Error(ErrorCode::kDimension, "adam: shape mismatch");
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    const double mi = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    const double vi = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    m[i] = static_cast<Real>(mi);
    v[i] = static_cast<Real>(vi);
    const double update = cfg.lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps);
    param[i] = static_cast<Real>(param[i] - update);
  }
}

template <typename Real>
double global_norm(const Model<Real>& grads) {
  double sq = 0.0;
  visit_model(grads, [&](const std::string&, const Array<Real>& a) {
    for (Real g : a.values()) sq += static_cast<double>(g) * static_cast<double>(g);
  });
  return std::sqrt(sq);
}

template <typename Real>
double adam_step(Model<Real>& params, Model<Real>& grads, AdamState<Real>& state,
                 const TrainConfig& cfg) {
  visit_model(grads, [](const std::string& name, const Array<Real>& a) {
    const auto vals = a.values();
    for (std::size_t i = 0; i < vals.size(); ++i)
      if (!std::isfinite(static_cast<double>(vals[i])))
        throw Error(ErrorCode::kNumeric, "non-finite gradient in " + name + " at index " +
                                             std::to_string(i) + "; step rejected");
  });
  const double norm = global_norm(grads);
  if (norm > cfg.clip_norm) {
    const Real s = static_cast<Real>(cfg.clip_norm / norm);
    visit_model(grads, [&](const std::string&, Array<Real>& a) {
      for (auto& g : a.values()) g *= s;
    });
  }
  ++state.step;
  std::vector<Array<Real>*> ps, gs, ms, vs;
  visit_model(params, [&](const std::string&, Array<Real>& a) { ps.push_back(&a); });
  visit_model(grads, [&](const std::string&, Array<Real>& a) { gs.push_back(&a); });
  visit_model(state.m, [&](const std::string&, Array<Real>& a) { ms.push_back(&a); });
  visit_model(state.v, [&](const std::string&, Array<Real>& a) { vs.push_back(&a); });
  if (gs.size() != ps.size() || ms.size() != ps.size() || vs.size() != ps.size())
    throw Error(ErrorCode::kDimension, "adam: parameter layout mismatch");
  for (std::size_t i = 0; i < ps.size(); ++i)
    adam_update<Real>(ps[i]->values(), gs[i]->values(), ms[i]->values(), vs[i]->values(),
                      state.step, cfg);
  return norm;
}

// ---------------------------------------------------------------- checkpoints

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::ostream& os, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) os.put(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::uint64_t get_uint(std::istream& is, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    const int c = is.get();
    if (c == EOF) throw Error(ErrorCode::kParse, "checkpoint: truncated file");
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
  }
  return v;
}

template <typename Real>
void put_tensor(std::ostream& os, const std::string& name, const Array<Real>& a) {
  put_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(os, static_cast<std::uint32_t>(a.shape().size()));
  for (auto d : a.shape()) put_u64(os, d);
  os.put(static_cast<char>(std::is_same_v<Real, float> ? 0 : 1));
  for (Real v : a.values()) {
    if constexpr (std::is_same_v<Real, float>) {
      std::uint32_t bits;
      std::memcpy(&bits, &v, 4);
      put_u32(os, bits);
    } else {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      put_u64(os, bits);
    }
  }
}

struct RawTensor {
  Shape shape;
  bool is_f32 = true;
  std::vector<float> f32;
  std::vector<double> f64;
};

RawTensor get_tensor(std::istream& is, std::string& name) {
  const auto name_len = get_uint(is, 4);
  if (name_len > 4096) throw Error(ErrorCode::kParse, "checkpoint: implausible tensor name length");
  name.resize(name_len);
  is.read(name.data(), static_cast<std::streamsize>(name_len));
  if (!is) throw Error(ErrorCode::kParse, "checkpoint: truncated tensor name");
  RawTensor t;
  const auto rank = get_uint(is, 4);
  if (rank > 8) throw Error(ErrorCode::kParse, "checkpoint: bad rank for " + name);
  std::uint64_t count = 1;
  for (std::uint64_t i = 0; i < rank; ++i) {
    t.shape.push_back(get_uint(is, 8));
    count *= t.shape.back();
  }
  if (count > (std::uint64_t{1} << 32)) throw Error(ErrorCode::kParse, "checkpoint: tensor too large");
  const auto tag = get_uint(is, 1);
  if (tag > 1) throw Error(ErrorCode::kParse, "checkpoint: unknown element type for " + name);
  t.is_f32 = tag == 0;
  for (std::uint64_t i = 0; i < count; ++i) {
    if (t.is_f32) {
      const auto bits = static_cast<std::uint32_t>(get_uint(is, 4));
      float f;
      std::memcpy(&f, &bits, 4);
      t.f32.push_back(f);
    } else {
      const auto bits = get_uint(is, 8);
      double d;
      std::memcpy(&d, &bits, 8);
      t.f64.push_back(d);
    }
  }
  return t;
}

template <typename Real>
void assign_tensor(Array<Real>& dst, const RawTensor& t, const std::string& name) {
  if (t.shape != dst.shape())
    throw Error(ErrorCode::kDimension, "checkpoint: " + name + " has shape " +
                                           shape_string(t.shape) + ", expected " +
                                           shape_string(dst.shape()));
  auto out = dst.values();
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = t.is_f32 ? static_cast<Real>(t.f32[i]) : static_cast<Real>(t.f64[i]);
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += v[i];
  }
  return s;
}

const char* const kMagic = "NPMT";

}  // namespace

template <typename Real>
void save_checkpoint(const std::string& path, const Checkpoint<Real>& ck) {
  auto kv = ck.cfg.to_map();
  for (const auto& [k, v] : ck.model.cfg.to_map()) kv[k] = v;
  kv["dropout"] = fmt_double(ck.model.cfg.dropout);
  kv["ckpt.epoch"] = std::to_string(ck.epoch);
  kv["ckpt.step"] = std::to_string(ck.step);
  kv["ckpt.dev_loss"] = fmt_double(ck.dev_loss);
  kv["ckpt.adam_step"] = std::to_string(ck.adam ? ck.adam->step : 0);
  kv["vocab.src"] = join(ck.src_vocab);
  kv["vocab.tgt"] = join(ck.tgt_vocab);
  std::string block;
  for (const auto& [k, v] : kv) block += k + "=" + v + "\n";

  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw Error(ErrorCode::kIo, "cannot write " + tmp);
    os.write(kMagic, 4);
    put_u32(os, ck.version);
    put_u32(os, static_cast<std::uint32_t>(block.size()));
    os.write(block.data(), static_cast<std::streamsize>(block.size()));
    std::uint32_t count = 0;
    visit_model(ck.model, [&](const std::string&, const Array<Real>&) { ++count; });
    const std::uint32_t per_model = count;
    if (ck.adam) count += 2 * per_model;
    put_u32(os, count);
    visit_model(ck.model, [&](const std::string& n, const Array<Real>& a) { put_tensor(os, n, a); });
    if (ck.adam) {
      visit_model(ck.adam->m,
                  [&](const std::string& n, const Array<Real>& a) { put_tensor(os, "adam.m/" + n, a); });
      visit_model(ck.adam->v,
                  [&](const std::string& n, const Array<Real>& a) { put_tensor(os, "adam.v/" + n, a); });
    }
    if (!os) throw Error(ErrorCode::kIo, "write failed: " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot move checkpoint into place: " + path);
}

template <typename Real>
Checkpoint<Real> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorCode::kIo, "cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw Error(ErrorCode::kParse, "checkpoint: bad magic in " + path);
  Checkpoint<Real> ck;
  ck.version = static_cast<std::uint32_t>(get_uint(is, 4));
  if (ck.version != kCheckpointVersion)
    throw Error(ErrorCode::kParse, "checkpoint: unsupported version " + std::to_string(ck.version));
  const auto block_len = get_uint(is, 4);
  std::string block(block_len, '\0');
  is.read(block.data(), static_cast<std::streamsize>(block_len));
  if (!is) throw Error(ErrorCode::kParse, "checkpoint: truncated config block");
  auto kv = parse_key_values(block);
  auto take = [&](const std::string& k) {
    auto it = kv.find(k);
    if (it == kv.end()) throw Error(ErrorCode::kParse, "checkpoint: missing key " + k);
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  ck.epoch = parse_u64("ckpt.epoch", take("ckpt.epoch"));
  ck.step = parse_u64("ckpt.step", take("ckpt.step"));
  ck.dev_loss = parse_double("ckpt.dev_loss", take("ckpt.dev_loss"));
  const auto adam_step_count = parse_u64("ckpt.adam_step", take("ckpt.adam_step"));
  ck.src_vocab = split_ws(take("vocab.src"));
  ck.tgt_vocab = split_ws(take("vocab.tgt"));
  ck.cfg = TrainConfig::from_map(kv);
  ck.model = make_model<Real>(ck.cfg.model);

  std::map<std::string, Array<Real>*> slots;
  visit_model(ck.model, [&](const std::string& n, Array<Real>& a) { slots[n] = &a; });
  const auto count = get_uint(is, 4);
  const std::size_t per_model = slots.size();
  if (count == 3 * per_model) {
    ck.adam = make_adam(ck.model);
    ck.adam->step = adam_step_count;
    visit_model(ck.adam->m, [&](const std::string& n, Array<Real>& a) { slots["adam.m/" + n] = &a; });
    visit_model(ck.adam->v, [&](const std::string& n, Array<Real>& a) { slots["adam.v/" + n] = &a; });
  } else if (count != per_model) {
    throw Error(ErrorCode::kParse, "checkpoint: tensor count " + std::to_string(count) +
                                       " does not match the model (" + std::to_string(per_model) +
                                       ")");
  }
  std::set<std::string> seen;
  for (std::uint64_t i = 0; i < count; ++i) {
    std::string name;
    const auto t = get_tensor(is, name);
    auto it = slots.find(name);
    if (it == slots.end()) throw Error(ErrorCode::kParse, "checkpoint: unexpected tensor " + name);
    if (!seen.insert(name).second) throw Error(ErrorCode::kParse, "checkpoint: duplicate tensor " + name);
    assign_tensor(*it->second, t, name);
  }
  return ck;
}

// ---------------------------------------------------------------- evaluation

template <typename Real>
EvalResult evaluate(const Model<Real>& m, const std::vector<SentencePair>& pairs, bool with_nll) {
  EvalResult r;
  std::size_t exact = 0, scored = 0;
  for (const auto& p : pairs) {
    r.outputs.push_back(translate_greedy(m, std::span<const TokenId>(p.src)));
    if (r.outputs.back().tokens() == p.tgt) ++exact;
    if (with_nll && segmentable(p.src.size(), p.tgt.size(), m.cfg.max_segment_len)) {
      r.nll += sentence_nll(m, p.src, p.tgt);
      ++scored;
    }
  }
  if (scored) r.nll /= static_cast<double>(scored);
  r.exact_match = pairs.empty() ? 0.0 : static_cast<double>(exact) / static_cast<double>(pairs.size());
  try {
    r.avg_seg_len = avg_segment_length(r.outputs);
  } catch (const Error&) {
    r.avg_seg_len = std::numeric_limits<double>::quiet_NaN();
  }
  return r;
}

double boundary_f1(const std::vector<SegmentedOutput>& predicted,
                   const std::vector<std::vector<std::size_t>>& reference) {
  if (predicted.size() != reference.size())
    throw Error(ErrorCode::kDimension, "boundary_f1: sentence counts differ");
  std::size_t tp = 0, n_pred = 0, n_ref = 0;
  for (std::size_t s = 0; s < predicted.size(); ++s) {
    std::set<std::size_t> pred, ref;
    std::size_t at = 0;
    for (const auto& seg : predicted[s].segments)
      if (!seg.empty()) pred.insert(at += seg.size());
    at = 0;
    for (auto len : reference[s])
      if (len) ref.insert(at += len);
    for (auto e : pred) tp += ref.count(e);
    n_pred += pred.size();
    n_ref += ref.size();
  }
  if (n_pred == 0 || n_ref == 0) return 0.0;
  const double p = static_cast<double>(tp) / static_cast<double>(n_pred);
  const double r = static_cast<double>(tp) / static_cast<double>(n_ref);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

// ---------------------------------------------------------------- training

namespace {

nlohmann::json finite_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

template <typename Real>
TrainResult<Real> train_loop(Model<Real>& model, const std::vector<SentencePair>& train,
                             const std::vector<SentencePair>& dev, const TrainConfig& cfg,
                             const TrainHooks& hooks) {
  cfg.validate();
  TrainResult<Real> res;
  const std::size_t L = model.cfg.max_segment_len;
  std::vector<SentencePair> train_ok, dev_ok;
  for (const auto& p : train) {
    if (segmentable(p.src.size(), p.tgt.size(), L)) {
      train_ok.push_back(p);
    } else {
      ++res.skipped_pairs;
    }
  }
  for (const auto& p : dev)
    if (segmentable(p.src.size(), p.tgt.size(), L)) dev_ok.push_back(p);
  if (train_ok.empty() || dev_ok.empty())
    throw Error(ErrorCode::kEmptyInput, "train_loop: train and dev splits must be non-empty");

  std::ofstream metrics_file;
  namespace fs = std::filesystem;
  if (!hooks.out_dir.empty()) {
    fs::create_directories(hooks.out_dir);
    metrics_file.open(fs::path(hooks.out_dir) / "metrics.jsonl");
    if (!metrics_file) throw Error(ErrorCode::kIo, "cannot write metrics in " + hooks.out_dir);
  }
  auto emit = [&](const nlohmann::json& j) {
    const std::string line = j.dump();
    if (metrics_file.is_open()) metrics_file << line << '\n' << std::flush;
    if (hooks.metrics) *hooks.metrics << line << '\n' << std::flush;
  };

  TrainConfig run = cfg;
  AdamState<Real> adam = make_adam(model);
  Model<Real> grads = make_model<Real>(model.cfg);
  double best_dev = std::numeric_limits<double>::infinity();
  res.best = model;
  std::size_t step = 0;
  const auto t_start = std::chrono::steady_clock::now();

  auto save = [&](const std::string& name, const Model<Real>& m, double dev_loss,
                  std::size_t epoch, bool with_adam) {
    if (hooks.out_dir.empty()) return;
    Checkpoint<Real> ck;
    ck.cfg = run;
    ck.cfg.model = m.cfg;
    ck.model = m;
    if (with_adam) ck.adam = adam;
    ck.epoch = epoch;
    ck.step = step;
    ck.dev_loss = dev_loss;
    ck.src_vocab = hooks.src_vocab;
    ck.tgt_vocab = hooks.tgt_vocab;
    save_checkpoint((fs::path(hooks.out_dir) / name).string(), ck);
  };

  for (std::size_t epoch = 1; epoch <= run.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto plan = make_batches(train_ok, Split::kTrain, run.batch_size, run.max_len,
                                   run.seed * 1000003ULL + epoch);
    double total = 0.0;
    std::size_t count = 0;
    for (const auto& batch : plan.batches) {
      zero_model(grads);
      for (auto idx : batch.indices) {
        const auto& p = train_ok[idx];
        std::seed_seq seq{run.seed, static_cast<std::uint64_t>(epoch),
                          static_cast<std::uint64_t>(idx)};
        Rng rng(seq);
        total += sentence_nll(model, p.src, p.tgt, &grads, true, &rng);
        ++count;
      }
      const Real inv = Real(1) / static_cast<Real>(batch.indices.size());
      visit_model(grads, [&](const std::string&, Array<Real>& a) {
        for (auto& g : a.values()) g *= inv;
      });
      adam_step(model, grads, adam, run);
      ++step;
    }
    res.skipped_pairs += epoch == 1 ? plan.dropped : 0;

    EpochMetrics em;
    em.epoch = epoch;
    em.train_nll = count ? total / static_cast<double>(count) : 0.0;
    const auto ev = evaluate(model, dev_ok);
    em.dev_nll = ev.nll;
    em.dev_exact_match = ev.exact_match;
    em.dev_avg_seg_len = ev.avg_seg_len;
    em.lr = run.lr;
    em.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    emit({{"epoch", epoch}, {"split", "train"}, {"nll", finite_or_null(em.train_nll)}});
    emit({{"epoch", epoch},
          {"split", "dev"},
          {"nll", finite_or_null(em.dev_nll)},
          {"exact_match", em.dev_exact_match},
          {"avg_seg_len", finite_or_null(em.dev_avg_seg_len)}});

    if (std::isnan(em.dev_nll))
      throw Error(ErrorCode::kNumeric, "dev NLL is NaN at epoch " + std::to_string(epoch) +
                                           "; last good checkpoint kept");
    res.history.push_back(em);
    if (hooks.on_epoch) hooks.on_epoch(em);

    save("last.ckpt", model, em.dev_nll, epoch, true);
    if (em.dev_nll < best_dev) {
      best_dev = em.dev_nll;
      res.best = model;
      res.best_epoch = epoch;
      save("best.ckpt", model, em.dev_nll, epoch, false);
    } else if (run.halve_on_plateau) {
      run.lr *= 0.5;
    }

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    if (run.stop_exact_match > 0.0 && em.dev_exact_match >= run.stop_exact_match) break;
    if (run.time_budget_s > 0.0 && elapsed >= run.time_budget_s) break;
  }
  return res;
}

// ---------------------------------------------------------------- toy tasks

void ToyTaskSpec::validate() const {
  if (src_vocab < 2 || tgt_vocab < 1) throw Error(ErrorCode::kConfig, "toy: vocab too small");
  if (min_phrase < 1 || min_phrase > max_phrase)
    throw Error(ErrorCode::kConfig, "toy: phrase lengths must satisfy 1 <= min <= max");
  if (min_len < 1 || min_len > max_len)
    throw Error(ErrorCode::kConfig, "toy: sentence lengths must satisfy 1 <= min <= max");
  if (kind == ToyKind::kLocalSwap && swap_distance < 1)
    throw Error(ErrorCode::kConfig, "toy: swap distance must be >= 1");
}

ToyTable make_toy_table(const ToyTaskSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  ToyTable t;
  t.swap_distance = spec.swap_distance;
  std::uniform_int_distribution<std::size_t> len(spec.min_phrase, spec.max_phrase);
  std::uniform_int_distribution<std::size_t> tok(0, spec.tgt_vocab - 1);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < spec.src_vocab; ++i) {
    names.push_back("s" + std::to_string(i));
    auto& ph = t.phrases[names.back()];
    const std::size_t n = len(rng);
    for (std::size_t k = 0; k < n; ++k) ph.push_back("t" + std::to_string(tok(rng)));
  }
  std::shuffle(names.begin(), names.end(), rng);
  t.triggers.insert(names.begin(), names.begin() + static_cast<long>(names.size() / 2));
  return t;
}

std::vector<std::size_t> toy_order(const ToyTable& table, const std::vector<std::string>& src,
                                   ToyKind kind) {
  std::vector<std::size_t> order(src.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (kind != ToyKind::kLocalSwap) return order;
  const std::size_t d = table.swap_distance;
  std::vector<bool> moved(src.size(), false);
  for (std::size_t i = 0; i + d < src.size(); ++i) {
    if (moved[i] || moved[i + d]) continue;
    if (table.triggers.count(src[i]) && !table.triggers.count(src[i + d])) {
      std::swap(order[i], order[i + d]);
      moved[i] = moved[i + d] = true;
    }
  }
  return order;
}

std::vector<std::string> toy_target(const ToyTable& table, const std::vector<std::string>& src,
                                    ToyKind kind) {
  std::vector<std::string> out;
  for (auto i : toy_order(table, src, kind)) {
    auto it = table.phrases.find(src[i]);
    if (it == table.phrases.end())
      throw Error(ErrorCode::kOutOfVocab, "toy: no phrase for source token '" + src[i] + "'");
    out.insert(out.end(), it->second.begin(), it->second.end());
  }
  return out;
}

double ToyCorpus::mean_phrase_len(Split s) const {
  std::size_t tokens = 0, segments = 0;
  for (const auto& segs : splits.at(s).segments)
    for (auto n : segs)
      if (n) {
        tokens += n;
        ++segments;
      }
  return segments ? static_cast<double>(tokens) / static_cast<double>(segments) : 0.0;
}

ToyCorpus gen_toy(const ToyTaskSpec& spec) {
  ToyCorpus c;
  c.table = make_toy_table(spec);
  Rng rng(spec.seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_int_distribution<std::size_t> len(spec.min_len, spec.max_len);
  std::uniform_int_distribution<std::size_t> tok(0, spec.src_vocab - 1);
  std::set<std::string> seen;
  const std::pair<Split, std::size_t> plan[] = {
      {Split::kTrain, spec.n_train}, {Split::kDev, spec.n_dev}, {Split::kTest, spec.n_test}};
  for (const auto& [split, n] : plan) {
    auto& out = c.splits[split];
    std::size_t attempts = 0;
    while (out.src.size() < n) {
      if (++attempts > 100 * (n + 10))
        throw Error(ErrorCode::kSize, "toy: cannot draw enough distinct sentences");
      std::vector<std::string> src(len(rng));
      for (auto& w : src) w = "s" + std::to_string(tok(rng));
      std::string line;
      for (std::size_t i = 0; i < src.size(); ++i) line += (i ? " " : "") + src[i];
      if (!seen.insert(line).second) continue;
      std::vector<std::size_t> segs;
      for (auto i : toy_order(c.table, src, spec.kind)) segs.push_back(c.table.phrases.at(src[i]).size());
      std::string tgt;
      const auto words = toy_target(c.table, src, spec.kind);
      for (std::size_t i = 0; i < words.size(); ++i) tgt += (i ? " " : "") + words[i];
      out.src.push_back(std::move(line));
      out.tgt.push_back(std::move(tgt));
      out.segments.push_back(std::move(segs));
    }
  }
  return c;
}

void write_toy(const ToyCorpus& c, const std::string& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const std::pair<Split, const char*> names[] = {
      {Split::kTrain, "train"}, {Split::kDev, "dev"}, {Split::kTest, "test"}};
  for (const auto& [split, name] : names) {
    const auto& s = c.splits.at(split);
    write_lines((fs::path(dir) / (std::string(name) + ".src")).string(), s.src);
    write_lines((fs::path(dir) / (std::string(name) + ".tgt")).string(), s.tgt);
    std::vector<std::string> seg_lines;
    for (const auto& segs : s.segments) {
      std::string l;
      for (std::size_t i = 0; i < segs.size(); ++i) l += (i ? " " : "") + std::to_string(segs[i]);
      seg_lines.push_back(std::move(l));
    }
    write_lines((fs::path(dir) / (std::string(name) + ".seg")).string(), seg_lines);
  }
  std::vector<std::string> table;
  for (const auto& [s, ph] : c.table.phrases) {
    std::string l = s + "\t";
    for (std::size_t i = 0; i < ph.size(); ++i) l += (i ? " " : "") + ph[i];
    l += c.table.triggers.count(s) ? "\t1" : "\t0";
    table.push_back(std::move(l));
  }
  write_lines((fs::path(dir) / "phrase_table.tsv").string(), table);
}

EncodedToy encode_toy(const ToyCorpus& c) {
  std::set<std::string> src_tokens, tgt_tokens;
  for (const auto& [s, ph] : c.table.phrases) {
    src_tokens.insert(s);
    tgt_tokens.insert(ph.begin(), ph.end());
  }
  auto numeric_order = [](std::set<std::string> s) {
    std::vector<std::string> v(s.begin(), s.end());
    std::sort(v.begin(), v.end(), [](const std::string& a, const std::string& b) {
      return a.size() != b.size() ? a.size() < b.size() : a < b;
    });
    return v;
  };
  EncodedToy e{Vocab::from_tokens(numeric_order(src_tokens)),
               Vocab::from_tokens(numeric_order(tgt_tokens)), {}};
  for (const auto& [split, s] : c.splits)
    for (std::size_t i = 0; i < s.src.size(); ++i)
      e.corpus[split].push_back({e.src_vocab.encode(s.src[i]), e.tgt_vocab.encode(s.tgt[i])});
  return e;
}

#define NPMT_INSTANTIATE(Real)                                                                   \
  template void zero_model<Real>(Model<Real>&);                                                  \
  template AdamState<Real> make_adam<Real>(const Model<Real>&);                                  \
  template void adam_update<Real>(std::span<Real>, std::span<const Real>, std::span<Real>,       \
                                  std::span<Real>, std::size_t, const TrainConfig&);             \
  template double global_norm<Real>(const Model<Real>&);                                         \
  template double adam_step<Real>(Model<Real>&, Model<Real>&, AdamState<Real>&,                  \
                                  const TrainConfig&);                                           \
  template void save_checkpoint<Real>(const std::string&, const Checkpoint<Real>&);              \
  template Checkpoint<Real> load_checkpoint<Real>(const std::string&);                           \
  template EvalResult evaluate<Real>(const Model<Real>&, const std::vector<SentencePair>&, bool); \
  template TrainResult<Real> train_loop<Real>(Model<Real>&, const std::vector<SentencePair>&,    \
                                              const std::vector<SentencePair>&,                  \
                                              const TrainConfig&, const TrainHooks&);

NPMT_INSTANTIATE(float)
NPMT_INSTANTIATE(double)
#undef NPMT_INSTANTIATE

}  // namespace npmt
