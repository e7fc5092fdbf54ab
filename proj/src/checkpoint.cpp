#include "streamcast/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "streamcast/common.hpp"

namespace streamcast {
namespace {

void append_escaped(std::string& out, const std::string& s) {
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
}

void pack_le(double v, unsigned char bytes[8]) {
  std::uint64_t u;
  std::memcpy(&u, &v, sizeof(u));
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(u >> (8 * i));
}

double unpack_le(const unsigned char bytes[8]) {
  std::uint64_t u = 0;
  for (int i = 0; i < 8; ++i) u |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  double v;
  std::memcpy(&v, &u, sizeof(v));
  return v;
}

nlohmann::json read_header(std::ifstream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("checkpoint " + path + " has no header line");
  try {
    return nlohmann::json::parse(line);
  } catch (const std::exception& e) {
    throw DataError("checkpoint " + path + " header is not valid JSON: " + e.what());
  }
}

CheckpointMeta meta_from_header(const nlohmann::json& header, const std::string& path) {
  CheckpointMeta meta;
  try {
    meta.version = header.at("version").get<int>();
    const auto& m = header.at("meta");
    meta.config_hash = std::stoull(m.at("config_hash").get<std::string>());
    meta.epochs = m.at("epochs").get<int>();
    meta.final_loss = m.at("final_loss").get<double>();
  } catch (const DataError&) {
    throw;
  } catch (const std::exception& e) {
    throw DataError("checkpoint " + path + " header is malformed: " + e.what());
  }
  if (meta.version != kCheckpointVersion) {
    throw DataError("checkpoint " + path + " has version " + std::to_string(meta.version) +
                    ", this build reads version " + std::to_string(kCheckpointVersion));
  }
  return meta;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& ps, const CheckpointMeta& meta) {
  std::string header = "{\"version\":" + std::to_string(kCheckpointVersion) + ",\"meta\":{";
  header += "\"config_hash\":\"" + std::to_string(meta.config_hash) + "\",";
  header += "\"epochs\":" + std::to_string(meta.epochs) + ",";
  char loss[40];
  std::snprintf(loss, sizeof(loss), "%.17g", meta.final_loss);
  header += std::string("\"final_loss\":") + loss + "},\"params\":[";

  std::size_t offset = 0;
  bool first = true;
  for (const auto& [name, tensor] : ps.entries()) {
    if (!first) header.push_back(',');
    first = false;
    header += "{\"name\":\"";
    append_escaped(header, name);
    header += "\",\"shape\":[";
    for (std::size_t d = 0; d < tensor.shape().size(); ++d) {
      if (d > 0) header.push_back(',');
      header += std::to_string(tensor.shape()[d]);
    }
    header += "],\"offset\":" + std::to_string(offset) + "}";
    offset += tensor.data().size() * 8;
  }
  header += "]}\n";

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write checkpoint to " + path);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  unsigned char bytes[8];
  for (const auto& [name, tensor] : ps.entries()) {
    for (double v : tensor.data()) {
      pack_le(v, bytes);
      out.write(reinterpret_cast<const char*>(bytes), 8);
    }
  }
  if (!out) throw DataError("failed while writing checkpoint to " + path);
}

CheckpointMeta load_checkpoint(const std::string& path, ParamStore& ps) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  const nlohmann::json header = read_header(in, path);
  const CheckpointMeta meta = meta_from_header(header, path);

  const auto& params = header.at("params");
  if (!params.is_array() || params.size() != ps.count()) {
    throw DataError("checkpoint " + path + " holds " + std::to_string(params.size()) +
                    " parameters, the store expects " + std::to_string(ps.count()));
  }

  std::size_t expected_offset = 0;
  unsigned char bytes[8];
  std::size_t index = 0;
  for (const auto& [name, tensor] : ps.entries()) {
    const auto& rec = params.at(index++);
    const std::string rec_name = rec.at("name").get<std::string>();
    if (rec_name != name) {
      throw DataError("checkpoint " + path + " parameter " + std::to_string(index - 1) + " is \"" +
                      rec_name + "\", the store expects \"" + name + "\"");
    }
    const Shape rec_shape = rec.at("shape").get<Shape>();
    if (rec_shape != tensor.shape()) {
      throw DataError("checkpoint " + path + " parameter \"" + name + "\" has a mismatched shape");
    }
    if (rec.at("offset").get<std::size_t>() != expected_offset) {
      throw DataError("checkpoint " + path + " parameter \"" + name + "\" has a bad offset");
    }
    Tensor t = ps.get(name);
    std::vector<double>& values = t.leaf_data();
    for (double& v : values) {
      in.read(reinterpret_cast<char*>(bytes), 8);
      if (!in) throw DataError("checkpoint " + path + " payload is truncated at \"" + name + "\"");
      v = unpack_le(bytes);
    }
    expected_offset += values.size() * 8;
  }
  if (in.get() != std::ifstream::traits_type::eof()) {
    throw DataError("checkpoint " + path + " has trailing bytes after the payload");
  }
  return meta;
}

CheckpointMeta peek_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint " + path);
  return meta_from_header(read_header(in, path), path);
}

}  // namespace streamcast
