#include "checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <vector>

namespace gimo {

namespace {

void put_le64(std::ostream& out, uint64_t v) {
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t get_le64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open checkpoint for writing: " + path);
  out << "GIMO-CKPT v1\n" << variant_name(params.variant) << "\n"
      << params.config.serialize() << "\n";
  size_t blocks = 0;
  params.for_each_param([&blocks](const std::string&, const Tensor&) { ++blocks; });
  out << blocks << "\n";
  params.for_each_param([&out](const std::string& name, const Tensor& t) {
    out << name << " " << t.rank();
    for (int d : t.shape()) out << " " << d;
    out << "\n";
    for (int64_t i = 0; i < t.size(); ++i) {
      uint64_t bits;
      double v = t[i];
      std::memcpy(&bits, &v, 8);
      put_le64(out, bits);
    }
    out << "\n";
  });
  if (!out) throw IoError("checkpoint write failed: " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path);
  std::string header, variant_line, config_line, count_line;
  if (!std::getline(in, header) || header != "GIMO-CKPT v1")
    throw ParseError(path + ": bad checkpoint header");
  if (!std::getline(in, variant_line)) throw ParseError(path + ": missing variant tag");
  if (!std::getline(in, config_line)) throw ParseError(path + ": missing architecture line");
  if (!std::getline(in, count_line)) throw ParseError(path + ": missing block count");

  const Variant variant = variant_from(variant_line);
  const ModelConfig cfg = ModelConfig::deserialize(config_line);
  ModelParams params = ModelParams::init(variant, cfg, 0);

  size_t expected = 0;
  try {
    expected = static_cast<size_t>(std::stoull(count_line));
  } catch (const std::exception&) {
    throw ParseError(path + ": bad block count '" + count_line + "'");
  }
  size_t seen = 0;
  params.for_each_param([&](const std::string& name, Tensor& t) {
    std::string block_name;
    int rank = 0;
    if (!(in >> block_name >> rank)) throw ParseError(path + ": truncated block header");
    if (block_name != name)
      throw ParseError(path + ": block '" + block_name + "' does not match expected '" + name +
                       "'");
    std::vector<int> shape(static_cast<size_t>(rank));
    for (int& d : shape)
      if (!(in >> d)) throw ParseError(path + ": truncated shape for block " + name);
    if (shape != t.shape())
      throw ParseError(path + ": shape mismatch for block " + name);
    in.ignore(1);  // newline before raw data
    for (int64_t i = 0; i < t.size(); ++i) {
      uint64_t bits = get_le64(in);
      std::memcpy(&t[i], &bits, 8);
    }
    in.ignore(1);
    if (!in) throw ParseError(path + ": truncated data in block " + name);
    ++seen;
  });
  if (seen != expected) throw ParseError(path + ": block count mismatch");
  return params;
}

}  // namespace gimo
