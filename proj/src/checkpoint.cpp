// Copyright (c) 2026, The nexttensor Authors
// SPDX-License-Identifier: Apache-2.0

#include "nexttensor/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "nexttensor/error.hpp"

namespace nxt {

namespace {

constexpr char kMagic[4] = {'T', 'A', 'R', '1'};
// Float steps are exact below 2^24.
constexpr std::int64_t kMaxStep = std::int64_t{1} << 24;

void put_u32(std::string& out, std::uint32_t x) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xFF));
}

void put_array(std::string& out, const std::string& name, const std::vector<std::uint32_t>& dims,
               const std::vector<float>& data) {
  put_u32(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put_u32(out, static_cast<std::uint32_t>(dims.size()));
  for (auto d : dims) put_u32(out, d);
  for (float f : data) put_u32(out, std::bit_cast<std::uint32_t>(f));
}

class Reader {
 public:
  Reader(const std::string& buf, const std::string& path) : buf_(buf), path_(path) {}

  bool done() const { return pos_ == buf_.size(); }

  std::uint32_t u32() {
    need(4);
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return x;
  }

  std::string bytes(std::size_t n) {
    need(n);
    std::string s = buf_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  void floats(std::vector<float>& out) {
    need(out.size() * 4);
    for (auto& f : out) f = std::bit_cast<float>(u32());
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw FileError("checkpoint '" + path_ + "': " + what);
  }

 private:
  void need(std::size_t n) const {
    if (buf_.size() - pos_ < n) fail("truncated at byte " + std::to_string(pos_));
  }

  const std::string& buf_;
  const std::string& path_;
  std::size_t pos_ = 0;
};

}  // namespace

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(target.parent_path(), ec);
  }
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FileError("cannot write '" + tmp + "'");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw FileError("write to '" + tmp + "' failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, target, ec);
  if (ec) throw FileError("cannot rename '" + tmp + "' to '" + path + "': " + ec.message());
}

void save_checkpoint(const std::string& path, const Config& config, const ModelParams<float>& params,
                     const OptimizerState* optimizer) {
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  const std::string text = to_text(config);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  for_each_tensor(params, [&out](const std::string& name, const Tensor<float>& t) { put_array(out, name, t.dims, t.data); });
  if (optimizer) {
    NXT_REQUIRE(optimizer->step >= 0 && optimizer->step < kMaxStep, "optimizer step does not fit the checkpoint format");
    put_array(out, "adam.step", {1}, {static_cast<float>(optimizer->step)});
    for_each_tensor(optimizer->m, [&out](const std::string& name, const Tensor<float>& t) {
      put_array(out, "adam.m." + name, t.dims, t.data);
    });
    for_each_tensor(optimizer->v, [&out](const std::string& name, const Tensor<float>& t) {
      put_array(out, "adam.v." + name, t.dims, t.data);
    });
  }
  write_file_atomic(path, out);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot read checkpoint '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();
  Reader r(buf, path);

  if (r.bytes(4) != std::string(kMagic, 4)) r.fail("bad magic (not a TAR1 checkpoint)");
  const auto version = r.u32();
  if (version != kCheckpointVersion)
    r.fail("unsupported version " + std::to_string(version) + " (expected " + std::to_string(kCheckpointVersion) + ")");
  const auto text = r.bytes(r.u32());

  Checkpoint ck;
  try {
    ck.config = parse_config(text);
    ck.config.validate();
  } catch (const ParameterError& e) {
    r.fail(std::string("embedded config is invalid: ") + e.what());
  }
  const auto mc = ck.config.model_config();
  ck.params = allocate_params<float>(mc);
  OptimizerState opt = make_optimizer_state(mc);

  std::map<std::string, Tensor<float>*> slots;
  for_each_tensor(ck.params, [&slots](const std::string& n, Tensor<float>& t) { slots[n] = &t; });
  for_each_tensor(opt.m, [&slots](const std::string& n, Tensor<float>& t) { slots["adam.m." + n] = &t; });
  for_each_tensor(opt.v, [&slots](const std::string& n, Tensor<float>& t) { slots["adam.v." + n] = &t; });
  Tensor<float> step = Tensor<float>::vec(1);
  slots["adam.step"] = &step;

  std::map<std::string, bool> seen;
  while (!r.done()) {
    const auto name = r.bytes(r.u32());
    const auto rank = r.u32();
    if (rank > 4) r.fail("array '" + name + "' has implausible rank " + std::to_string(rank));
    std::vector<std::uint32_t> dims(rank);
    for (auto& d : dims) d = r.u32();
    auto it = slots.find(name);
    if (it == slots.end()) r.fail("unknown array '" + name + "'");
    if (seen[name]) r.fail("duplicate array '" + name + "'");
    if (dims != it->second->dims) r.fail("array '" + name + "' has a shape that disagrees with the embedded config");
    r.floats(it->second->data);
    seen[name] = true;
  }

  std::size_t model_arrays = 0, opt_arrays = 0;
  for (const auto& [name, _] : seen) (name.starts_with("adam.") ? opt_arrays : model_arrays) += 1;
  std::size_t expected_model = 0;
  for_each_tensor(ck.params, [&expected_model](const std::string&, const Tensor<float>&) { ++expected_model; });
  if (model_arrays != expected_model)
    r.fail("holds " + std::to_string(model_arrays) + " model arrays, config expects " + std::to_string(expected_model));
  if (opt_arrays != 0) {
    if (opt_arrays != 2 * expected_model + 1) r.fail("optimizer state is incomplete");
    opt.step = static_cast<std::int64_t>(step.data[0]);
    ck.optimizer = std::move(opt);
  }
  return ck;
}

}  // namespace nxt
