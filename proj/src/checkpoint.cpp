#include "fedsvm/checkpoint.hpp"

#include <fstream>

#include <fmt/format.h>

#include "fedsvm/binary_io.hpp"
#include "fedsvm/error.hpp"

namespace fedsvm {

namespace {
constexpr std::string_view kWhat = "checkpoint";
}

void write_checkpoint(std::ostream& out, const Model& model) {
  model.validate();
  binary::write_magic(out, "FSVM");
  binary::write_u32_le(out, kCheckpointVersion);
  binary::write_u32_le(out, static_cast<std::uint32_t>(model.encoder.size()));
  for (const auto& layer : model.encoder) {
    binary::write_u32_le(out, static_cast<std::uint32_t>(layer.out_dim()));
    binary::write_u32_le(out, static_cast<std::uint32_t>(layer.in_dim()));
  }
  binary::write_u32_le(out, static_cast<std::uint32_t>(model.num_classes()));
  binary::write_u32_le(out, static_cast<std::uint32_t>(model.embedding_dim()));
  const auto flat = flatten_params(model);
  binary::write_u64_le(out, flat.size());
  for (double v : flat.values()) binary::write_f64_le(out, v);
}

Model read_checkpoint(std::istream& in) {
  binary::expect_magic(in, "FSVM", kWhat);
  const auto version = binary::read_u32_le(in, kWhat);
  if (version != kCheckpointVersion) {
    throw FormatError(fmt::format("checkpoint: unsupported version {}", version));
  }
  Model model;
  const auto layers = binary::read_u32_le(in, kWhat);
  for (std::uint32_t l = 0; l < layers; ++l) {
    const auto out_dim = binary::read_u32_le(in, kWhat);
    const auto in_dim = binary::read_u32_le(in, kWhat);
    model.encoder.push_back(
        {Tensor(Shape{out_dim, in_dim}), Tensor(Shape{out_dim})});
  }
  const auto k = binary::read_u32_le(in, kWhat);
  const auto d = binary::read_u32_le(in, kWhat);
  model.logit_matrix = Tensor(Shape{k, d});
  model.validate();
  const auto count = binary::read_u64_le(in, kWhat);
  if (count != model.parameter_count()) {
    throw FormatError(fmt::format(
        "checkpoint: manifest describes {} parameters but payload has {}",
        model.parameter_count(), count));
  }
  std::vector<double> flat(count);
  for (auto& v : flat) v = binary::read_f64_le(in, kWhat);
  return unflatten_params(model, Tensor::vector(std::move(flat)));
}

void save_checkpoint(const std::filesystem::path& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_checkpoint(out, model);
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace fedsvm
