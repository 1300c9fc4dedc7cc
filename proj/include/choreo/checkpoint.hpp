#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "choreo/binio.hpp"
#include "choreo/nn.hpp"
#include "choreo/tensor.hpp"

namespace choreo {

// Shared parameter-file format: named f64 tensors with shape metadata plus
// string entries (epoch counters, RNG state, manifests). Layout:
//   "CKPT" | u32 version | u32 n_entries | entries
//   entry: u8 kind | u32 name_len | name
//     kind 0: u32 rank | u32 dims[rank] | f64 data
//     kind 1: u32 len | bytes
class Checkpoint {
 public:
  std::map<std::string, Tensor> tensors;
  std::map<std::string, std::string> strings;

  void put_params(const nn::ParamSet& ps, const std::string& prefix = "") {
    for (const auto& p : ps.items()) tensors[prefix + p->name] = p->value;
  }

  // Copies stored tensors into an existing parameter set; every parameter
  // must be present with a matching shape.
  void load_params(const nn::ParamSet& ps, const std::string& prefix = "") const {
    for (const auto& p : ps.items()) {
      auto it = tensors.find(prefix + p->name);
      if (it == tensors.end())
        throw StateError("checkpoint is missing parameter '" + prefix + p->name + "'");
      if (it->second.shape() != p->value.shape())
        throw StateError("checkpoint parameter '" + prefix + p->name + "' has shape " +
                         shape_str(it->second.shape()) + ", expected " +
                         shape_str(p->value.shape()));
      p->value = it->second;
    }
  }

  bool has_prefix(const std::string& prefix) const {
    auto it = tensors.lower_bound(prefix);
    return it != tensors.end() && it->first.rfind(prefix, 0) == 0;
  }

  void put_adam(const nn::Adam& opt, const std::string& prefix) {
    strings[prefix + ".t"] = std::to_string(opt.step_count());
    for (const auto& [name, slot] : opt.slots()) {
      tensors[prefix + ".m." + name] = slot.m;
      tensors[prefix + ".v." + name] = slot.v;
    }
  }

  void load_adam(nn::Adam& opt, const std::string& prefix) const {
    auto it = strings.find(prefix + ".t");
    if (it == strings.end()) throw StateError("checkpoint has no optimizer state '" + prefix + "'");
    opt.set_step_count(std::stoll(it->second));
    opt.slots().clear();
    std::string mpre = prefix + ".m.";
    for (const auto& [name, t] : tensors) {
      if (name.rfind(mpre, 0) != 0) continue;
      std::string pname = name.substr(mpre.size());
      nn::Adam::Slot slot;
      slot.m = t;
      slot.v = tensors.at(prefix + ".v." + pname);
      opt.slots()[pname] = std::move(slot);
    }
  }

  void save(std::ostream& os) const {
    binio::write_magic(os, "CKPT");
    binio::write_le<uint32_t>(os, kVersion);
    binio::write_le<uint32_t>(os, static_cast<uint32_t>(tensors.size() + strings.size()));
    auto write_name = [&](const std::string& name) {
      binio::write_le<uint32_t>(os, static_cast<uint32_t>(name.size()));
      os.write(name.data(), static_cast<std::streamsize>(name.size()));
    };
    for (const auto& [name, t] : tensors) {
      binio::write_le<uint8_t>(os, 0);
      write_name(name);
      binio::write_le<uint32_t>(os, static_cast<uint32_t>(t.rank()));
      for (int d : t.shape()) binio::write_le<uint32_t>(os, static_cast<uint32_t>(d));
      for (int64_t i = 0; i < t.numel(); ++i) binio::write_le<double>(os, t[i]);
    }
    for (const auto& [name, s] : strings) {
      binio::write_le<uint8_t>(os, 1);
      write_name(name);
      binio::write_le<uint32_t>(os, static_cast<uint32_t>(s.size()));
      os.write(s.data(), static_cast<std::streamsize>(s.size()));
    }
  }

  void save(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint " + path.string());
    save(os);
    if (!os) throw DataError("failed writing checkpoint " + path.string());
  }

  static Checkpoint load(std::istream& is) {
    if (binio::read_magic(is) != "CKPT") throw DataError("not a checkpoint file");
    uint32_t version = binio::read_le<uint32_t>(is);
    if (version != kVersion)
      throw DataError("checkpoint version " + std::to_string(version) +
                      " needs migration; this build reads version " + std::to_string(kVersion));
    uint32_t n = binio::read_le<uint32_t>(is);
    Checkpoint ck;
    for (uint32_t e = 0; e < n; ++e) {
      uint8_t kind = binio::read_le<uint8_t>(is);
      uint32_t name_len = binio::read_le<uint32_t>(is);
      std::string name(name_len, '\0');
      is.read(name.data(), name_len);
      if (kind == 0) {
        uint32_t rank = binio::read_le<uint32_t>(is);
        Shape shape(rank);
        for (auto& d : shape) d = static_cast<int>(binio::read_le<uint32_t>(is));
        Tensor t(shape);
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = binio::read_le<double>(is);
        ck.tensors[name] = std::move(t);
      } else if (kind == 1) {
        uint32_t len = binio::read_le<uint32_t>(is);
        std::string s(len, '\0');
        is.read(s.data(), len);
        ck.strings[name] = std::move(s);
      } else {
        throw DataError("unknown checkpoint entry kind " + std::to_string(kind));
      }
    }
    return ck;
  }

  static Checkpoint load(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw StateError("cannot open checkpoint " + path.string());
    return load(is);
  }

  static constexpr uint32_t kVersion = 1;
};

}  // namespace choreo
