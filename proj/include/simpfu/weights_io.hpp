#pragma once

// Weights file: a JSON manifest (architecture, tensor names, shapes, dtype,
// byte offsets) next to a raw little-endian float32 blob. Batch-norm running
// statistics are stored alongside the trainable tensors.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "json.hpp"

#include "simpfu/errors.hpp"
#include "simpfu/model.hpp"

namespace simpfu {

inline nlohmann::json arch_to_json(const ArchConfig& a) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : a.blocks) blocks.push_back({{"channels", b.channels}, {"time_active", b.time_active}});
  return {{"name", a.name},
          {"blocks", blocks},
          {"head_channels", a.head_channels},
          {"n_classes", a.n_classes},
          {"time_avgpool", a.time_avgpool},
          {"input_time", a.input_time},
          {"input_freq", a.input_freq}};
}

inline ArchConfig arch_from_json(const nlohmann::json& j) {
  try {
    ArchConfig a;
    a.name = j.at("name").get<std::string>();
    for (const auto& b : j.at("blocks"))
      a.blocks.push_back({b.at("channels").get<std::size_t>(), b.at("time_active").get<bool>()});
    a.head_channels = j.at("head_channels").get<std::size_t>();
    a.n_classes = j.at("n_classes").get<std::size_t>();
    a.time_avgpool = j.at("time_avgpool").get<bool>();
    a.input_time = j.at("input_time").get<std::size_t>();
    a.input_freq = j.at("input_freq").get<std::size_t>();
    a.validate();
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("invalid architecture in manifest: ") + e.what());
  }
}

inline std::filesystem::path blob_path_for(const std::filesystem::path& manifest) {
  auto p = manifest;
  return p.replace_extension(".bin");
}

inline void save_weights(const Network& net, const std::filesystem::path& manifest_path,
                         const nlohmann::json& metadata = nlohmann::json::object()) {
  const auto blob_path = blob_path_for(manifest_path);
  std::ofstream blob(blob_path, std::ios::binary);
  if (!blob) throw std::runtime_error("cannot write " + blob_path.string());
  nlohmann::json tensors = nlohmann::json::array();
  std::size_t offset = 0;
  net.visit_tensors([&](const std::string& name, const Tensor& t, bool trainable) {
    const std::size_t bytes = t.size() * sizeof(float);
    tensors.push_back({{"name", name},
                       {"shape", t.shape()},
                       {"dtype", "float32"},
                       {"offset", offset},
                       {"nbytes", bytes},
                       {"trainable", trainable}});
    blob.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(bytes));
    offset += bytes;
  });
  if (!blob) throw std::runtime_error("short write to " + blob_path.string());
  nlohmann::json manifest = {{"format", "simpfu-weights"},
                             {"version", 1},
                             {"byte_order", "little"},
                             {"blob", blob_path.filename().string()},
                             {"blob_bytes", offset},
                             {"arch", arch_to_json(net.arch())},
                             {"n_params", net.parameter_count()},
                             {"tensors", tensors},
                             {"metadata", metadata}};
  std::ofstream out(manifest_path);
  if (!out) throw std::runtime_error("cannot write " + manifest_path.string());
  out << manifest.dump(2) << '\n';
}

inline nlohmann::json read_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw ValidationError("cannot open weights manifest " + manifest_path.string());
  try {
    auto j = nlohmann::json::parse(in);
    if (j.value("format", "") != "simpfu-weights") throw ValidationError("not a simpfu weights manifest");
    return j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(manifest_path.string() + ": " + e.what());
  }
}

inline Network load_weights(const std::filesystem::path& manifest_path) {
  const auto manifest = read_manifest(manifest_path);
  Network net(arch_from_json(manifest.at("arch")), 0);
  const auto blob_path = manifest_path.parent_path() / manifest.at("blob").get<std::string>();
  std::ifstream blob(blob_path, std::ios::binary);
  if (!blob) throw ValidationError("cannot open weights blob " + blob_path.string());
  std::map<std::string, nlohmann::json> entries;
  for (const auto& t : manifest.at("tensors")) entries[t.at("name").get<std::string>()] = t;
  net.visit_tensors([&](const std::string& name, Tensor& t, bool) {
    auto it = entries.find(name);
    if (it == entries.end()) throw ValidationError("weights manifest lacks tensor " + name);
    if (it->second.at("shape").get<Shape>() != t.shape())
      throw ValidationError("shape mismatch for tensor " + name);
    blob.seekg(it->second.at("offset").get<std::streamoff>());
    blob.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!blob) throw ValidationError("weights blob truncated at tensor " + name);
  });
  return net;
}

}  // namespace simpfu
