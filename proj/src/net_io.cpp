#include <fstream>

#include "emde/binary_io.hpp"
#include "emde/net.hpp"

namespace emde {

void save_model(const std::filesystem::path& path, const SketchModel& model) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write("EMDENET1", 8);
  binary::write<std::uint32_t>(out, 1);
  binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(model.widths.size()));
  for (auto w : model.widths) binary::write<std::uint64_t>(out, static_cast<std::uint64_t>(w));
  binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(model.n_sketches));
  binary::write<std::uint32_t>(out, static_cast<std::uint32_t>(model.activation));
  binary::write<double>(out, model.leaky_slope);
  binary::write<std::uint64_t>(out, model.seed);
  for (std::size_t l = 0; l < model.n_layers(); ++l) {
    const auto& w = model.weights[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) binary::write<double>(out, w(i, j));
    for (Eigen::Index i = 0; i < model.biases[l].size(); ++i) binary::write<double>(out, model.biases[l](i));
  }
  if (!out) throw DataError("write failed: " + path.string());
}

SketchModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  binary::expect_magic(in, "EMDENET1");
  if (binary::read<std::uint32_t>(in) != 1) throw DataError("unsupported checkpoint version");
  std::vector<Eigen::Index> widths(binary::read<std::uint32_t>(in));
  for (auto& w : widths) w = static_cast<Eigen::Index>(binary::read<std::uint64_t>(in));
  const auto n_sketches = static_cast<int>(binary::read<std::uint32_t>(in));
  auto model = SketchModel::zeros(std::move(widths), n_sketches);
  const auto act = binary::read<std::uint32_t>(in);
  if (act > 1) throw DataError("unknown activation tag in checkpoint");
  model.activation = static_cast<Activation>(act);
  model.leaky_slope = binary::read<double>(in);
  model.seed = binary::read<std::uint64_t>(in);
  for (std::size_t l = 0; l < model.n_layers(); ++l) {
    auto& w = model.weights[l];
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j) w(i, j) = binary::read<double>(in);
    for (Eigen::Index i = 0; i < model.biases[l].size(); ++i) model.biases[l](i) = binary::read<double>(in);
  }
  if (!model.all_finite()) throw NumericError("checkpoint holds non-finite parameters");
  return model;
}

}  // namespace emde
