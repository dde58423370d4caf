#include "deepvo/nn/checkpoint.hpp"

#include <algorithm>
#include <fstream>

#include "deepvo/binio.hpp"

namespace deepvo::nn {

const Tensor<float>* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void Checkpoint::put(std::string name, Tensor<float> t) {
  for (auto& [n, existing] : tensors) {
    if (n == name) {
      existing = std::move(t);
      return;
    }
  }
  tensors.emplace_back(std::move(name), std::move(t));
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(Errc::IoError, "cannot write " + tmp.string());
    out.write("DVOC", 4);
    binio::put_uint<std::uint32_t>(out, kCheckpointVersion);
    binio::put_uint<std::uint64_t>(out, ckpt.tensors.size());
    for (const auto& [name, t] : ckpt.tensors) {
      binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
      out.write(name.data(), static_cast<std::streamsize>(name.size()));
      binio::put_uint<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
      for (Index d : t.shape()) binio::put_uint<std::uint64_t>(out, static_cast<std::uint64_t>(d));
      for (Index i = 0; i < t.size(); ++i) binio::put_f32(out, t[i]);
    }
    const std::string meta = ckpt.metadata.serialize();
    binio::put_uint<std::uint64_t>(out, meta.size());
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
    if (!out) throw Error(Errc::IoError, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open checkpoint " + path.string());
  // Bounds every declared size so a corrupt header cannot trigger a huge allocation.
  const auto file_size = std::filesystem::file_size(path);
  binio::expect_magic(in, "DVOC");
  const auto version = binio::get_uint<std::uint32_t>(in);
  if (version != kCheckpointVersion) {
    throw Error(Errc::DecodeError, "unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto count = binio::get_uint<std::uint64_t>(in);
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto name_len = binio::get_uint<std::uint32_t>(in);
    if (name_len > file_size) throw Error(Errc::DecodeError, "tensor name longer than the file");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw Error(Errc::DecodeError, "truncated tensor name");
    const auto rank = binio::get_uint<std::uint32_t>(in);
    if (rank > 8) throw Error(Errc::DecodeError, "tensor rank " + std::to_string(rank) + " too large");
    Shape shape;
    std::uint64_t count_elems = 1;
    for (std::uint32_t r = 0; r < rank; ++r) {
      const auto d = binio::get_uint<std::uint64_t>(in);
      if (d > file_size || (count_elems *= std::max<std::uint64_t>(d, 1)) > file_size / 4) {
        throw Error(Errc::DecodeError, "tensor " + name + " larger than the file");
      }
      shape.push_back(static_cast<Index>(d));
    }
    Tensor<float> t(shape);
    for (Index i = 0; i < t.size(); ++i) t[i] = binio::get_f32(in);
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  const auto meta_len = binio::get_uint<std::uint64_t>(in);
  if (meta_len > file_size) throw Error(Errc::DecodeError, "metadata longer than the file");
  std::string meta(meta_len, '\0');
  if (!in.read(meta.data(), static_cast<std::streamsize>(meta_len))) {
    throw Error(Errc::DecodeError, "truncated checkpoint metadata");
  }
  ckpt.metadata = KeyValues::parse(meta);
  return ckpt;
}

}  // namespace deepvo::nn
