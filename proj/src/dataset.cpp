#include "fedsvm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/format.h>

#include "fedsvm/binary_io.hpp"
#include "fedsvm/error.hpp"
#include "fedsvm/model.hpp"

namespace fedsvm {

namespace {

constexpr std::uint32_t kDatasetVersion = 1;
constexpr std::string_view kFsds = "dataset";

// Independent, reproducible stream for one purpose of one seed.
Rng stream(std::uint64_t seed, std::uint64_t purpose) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed),
                    static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(purpose)};
  return Rng(seq);
}

std::vector<double> dirichlet(std::size_t k, double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> p(k);
  double total = 0.0;
  for (auto& v : p) {
    v = gamma(rng);
    total += v;
  }
  if (!(total > 0.0)) {
    // Every draw underflowed (tiny alpha): all mass on one uniform class.
    std::fill(p.begin(), p.end(), 0.0);
    p[std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)] = 1.0;
    return p;
  }
  for (auto& v : p) v /= total;
  return p;
}

ClientData make_client(std::size_t p, const std::vector<LabeledSample>& samples) {
  ClientData c;
  if (samples.empty()) return c;
  c.features = Tensor(Shape{samples.size(), p});
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::copy(samples[i].features.begin(), samples[i].features.end(),
              c.features.row(i).begin());
    c.labels.push_back(samples[i].label);
  }
  return c;
}

}  // namespace

void FederatedDataset::validate() const {
  const std::size_t n = clients.size();
  if (n == 0) throw Error("dataset has no clients");
  if (num_classes < 2) throw Error("dataset needs at least 2 classes");
  std::vector<int> seen(n, 0);
  for (auto idx : train_clients) {
    if (idx >= n) throw Error(fmt::format("train client {} out of range", idx));
    if (clients[idx].empty()) throw Error(fmt::format("train client {} is empty", idx));
    ++seen[idx];
  }
  for (auto idx : heldout_clients) {
    if (idx >= n) throw Error(fmt::format("held-out client {} out of range", idx));
    ++seen[idx];
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (seen[i] != 1) {
      throw Error(fmt::format("client {} must be in exactly one of train/held-out", i));
    }
    const auto& c = clients[i];
    if (c.empty()) continue;
    if (c.features.rank() != 2 || c.features.cols() != feature_dim ||
        c.features.rows() != c.labels.size()) {
      throw ShapeError(fmt::format("client {} features do not match width {}", i,
                                   feature_dim));
    }
    for (auto y : c.labels) {
      if (y >= num_classes) {
        throw Error(fmt::format("client {} has label {} >= K = {}", i, y, num_classes));
      }
    }
  }
}

ClientData FederatedDataset::heldout_pool() const {
  std::size_t total = 0;
  for (auto idx : heldout_clients) total += clients.at(idx).size();
  if (total == 0) throw Error("held-out client pool is empty");
  ClientData pool{Tensor(Shape{total, feature_dim}), {}};
  pool.labels.reserve(total);
  std::size_t r = 0;
  for (auto idx : heldout_clients) {
    const auto& c = clients[idx];
    for (std::size_t i = 0; i < c.size(); ++i, ++r) {
      const auto src = c.features.row(i);
      std::copy(src.begin(), src.end(), pool.features.row(r).begin());
      pool.labels.push_back(c.labels[i]);
    }
  }
  return pool;
}

void SyntheticSpec::validate() const {
  if (num_clients < 2) throw ConfigError("dataset.num_clients must be at least 2");
  if (num_classes < 2) throw ConfigError("dataset.num_classes must be at least 2");
  if (feature_dim == 0) throw ConfigError("dataset.feature_dim must be positive");
  if (!(samples_mean >= 1.0)) throw ConfigError("dataset.samples_mean must be >= 1");
  if (!(samples_spread >= 0.0)) {
    throw ConfigError("dataset.samples_spread must be nonnegative");
  }
  if (!(dirichlet_alpha > 0.0)) throw ConfigError("dataset.dirichlet_alpha must be positive");
  if (!(class_separation > 0.0)) {
    throw ConfigError("dataset.class_separation must be positive");
  }
  if (!(noise_sigma > 0.0)) throw ConfigError("dataset.noise_sigma must be positive");
}

void split_clients(FederatedDataset& dataset, std::uint64_t seed) {
  const std::size_t n = dataset.num_clients();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t heldout = 0;
  if (n > 1) {
    heldout = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(n)));
    heldout = std::clamp<std::size_t>(heldout, 1, n - 1);
  }
  auto rng = stream(seed, 2);
  std::shuffle(order.begin(), order.end(), rng);
  dataset.heldout_clients.assign(order.begin(), order.begin() + static_cast<long>(heldout));
  dataset.train_clients.assign(order.begin() + static_cast<long>(heldout), order.end());
  std::sort(dataset.heldout_clients.begin(), dataset.heldout_clients.end());
  std::sort(dataset.train_clients.begin(), dataset.train_clients.end());
}

FederatedDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  auto rng = stream(spec.seed, 1);
  std::normal_distribution<double> gauss(0.0, 1.0);

  std::vector<std::vector<double>> means(spec.num_classes,
                                         std::vector<double>(spec.feature_dim));
  for (auto& m : means) {
    double len = 0.0;
    while (len == 0.0) {
      for (auto& v : m) v = gauss(rng);
      len = norm(m);
    }
    for (auto& v : m) v *= spec.class_separation / len;
  }

  FederatedDataset ds;
  ds.num_classes = spec.num_classes;
  ds.feature_dim = spec.feature_dim;
  std::normal_distribution<double> count_dist(spec.samples_mean, spec.samples_spread);
  for (std::size_t c = 0; c < spec.num_clients; ++c) {
    const auto mix = dirichlet(spec.num_classes, spec.dirichlet_alpha, rng);
    std::discrete_distribution<std::size_t> label_dist(mix.begin(), mix.end());
    const double drawn = spec.samples_spread > 0.0 ? count_dist(rng) : spec.samples_mean;
    const auto n = static_cast<std::size_t>(std::max(1.0, std::round(drawn)));
    std::vector<LabeledSample> samples(n);
    for (auto& s : samples) {
      s.label = label_dist(rng);
      s.features = means[s.label];
      for (auto& v : s.features) v += spec.noise_sigma * gauss(rng);
    }
    ds.clients.push_back(make_client(spec.feature_dim, samples));
  }
  split_clients(ds, spec.seed);
  ds.validate();
  return ds;
}

FederatedDataset partition_by_client(const std::vector<LabeledSample>& samples,
                                     std::size_t num_clients,
                                     double dirichlet_alpha, std::uint64_t seed) {
  if (samples.empty()) throw Error("cannot partition an empty sample list");
  if (num_clients == 0) throw Error("num_clients must be positive");
  if (samples.size() < num_clients) {
    throw Error(fmt::format("{} samples cannot fill {} clients", samples.size(),
                            num_clients));
  }
  if (!(dirichlet_alpha > 0.0)) throw Error("dirichlet_alpha must be positive");
  const std::size_t p = samples.front().features.size();
  std::size_t k = 0;
  for (const auto& s : samples) {
    if (s.features.size() != p) throw ShapeError("samples have differing widths");
    k = std::max(k, s.label + 1);
  }

  auto rng = stream(seed, 3);
  std::vector<std::vector<std::size_t>> by_class(k);
  for (std::size_t i = 0; i < samples.size(); ++i) by_class[samples[i].label].push_back(i);

  std::vector<std::vector<std::size_t>> assigned(num_clients);
  for (auto& members : by_class) {
    if (members.empty()) continue;
    std::shuffle(members.begin(), members.end(), rng);
    const auto share = dirichlet(num_clients, dirichlet_alpha, rng);
    double cumulative = 0.0;
    std::size_t begin = 0;
    for (std::size_t c = 0; c < num_clients; ++c) {
      cumulative += share[c];
      std::size_t end =
          c + 1 == num_clients
              ? members.size()
              : std::min(members.size(), static_cast<std::size_t>(std::llround(
                                             cumulative * members.size())));
      end = std::max(end, begin);
      assigned[c].insert(assigned[c].end(), members.begin() + static_cast<long>(begin),
                         members.begin() + static_cast<long>(end));
      begin = end;
    }
  }
  for (auto& a : assigned) {
    if (!a.empty()) continue;
    auto largest = std::max_element(
        assigned.begin(), assigned.end(),
        [](const auto& x, const auto& y) { return x.size() < y.size(); });
    a.push_back(largest->back());
    largest->pop_back();
  }

  FederatedDataset ds;
  ds.num_classes = std::max<std::size_t>(k, 2);
  ds.feature_dim = p;
  for (auto& a : assigned) {
    std::sort(a.begin(), a.end());
    std::vector<LabeledSample> part;
    part.reserve(a.size());
    for (auto i : a) part.push_back(samples[i]);
    ds.clients.push_back(make_client(p, part));
  }
  split_clients(ds, seed);
  ds.validate();
  return ds;
}

void write_dataset(std::ostream& out, const FederatedDataset& dataset,
                   const SyntheticSpec& spec) {
  dataset.validate();
  using namespace binary;
  write_magic(out, "FSDS");
  write_u32_le(out, kDatasetVersion);
  write_u64_le(out, spec.num_clients);
  write_u64_le(out, spec.num_classes);
  write_u64_le(out, spec.feature_dim);
  write_f64_le(out, spec.samples_mean);
  write_f64_le(out, spec.samples_spread);
  write_f64_le(out, spec.dirichlet_alpha);
  write_f64_le(out, spec.class_separation);
  write_f64_le(out, spec.noise_sigma);
  write_u64_le(out, spec.seed);

  write_u64_le(out, dataset.num_classes);
  write_u64_le(out, dataset.feature_dim);
  write_u64_le(out, dataset.num_clients());
  write_u64_le(out, dataset.train_clients.size());
  for (auto i : dataset.train_clients) write_u64_le(out, i);
  write_u64_le(out, dataset.heldout_clients.size());
  for (auto i : dataset.heldout_clients) write_u64_le(out, i);
  for (const auto& c : dataset.clients) {
    write_u64_le(out, c.size());
    if (c.empty()) continue;
    for (double v : c.features.values()) write_f64_le(out, v);
    for (auto y : c.labels) write_u32_le(out, static_cast<std::uint32_t>(y));
  }
  if (!out) throw Error("dataset: write failed");
}

FederatedDataset read_dataset(std::istream& in, SyntheticSpec* spec) {
  using namespace binary;
  expect_magic(in, "FSDS", kFsds);
  const auto version = read_u32_le(in, kFsds);
  if (version != kDatasetVersion) {
    throw FormatError(fmt::format("dataset: unsupported version {}", version));
  }
  SyntheticSpec echo;
  echo.num_clients = read_u64_le(in, kFsds);
  echo.num_classes = read_u64_le(in, kFsds);
  echo.feature_dim = read_u64_le(in, kFsds);
  echo.samples_mean = read_f64_le(in, kFsds);
  echo.samples_spread = read_f64_le(in, kFsds);
  echo.dirichlet_alpha = read_f64_le(in, kFsds);
  echo.class_separation = read_f64_le(in, kFsds);
  echo.noise_sigma = read_f64_le(in, kFsds);
  echo.seed = read_u64_le(in, kFsds);
  if (spec) *spec = echo;

  FederatedDataset ds;
  ds.num_classes = read_u64_le(in, kFsds);
  ds.feature_dim = read_u64_le(in, kFsds);
  const auto n = read_u64_le(in, kFsds);
  // Guard allocations against corrupt headers before trusting counts.
  constexpr std::uint64_t kSane = std::uint64_t{1} << 32;
  if (n > kSane || ds.feature_dim == 0 || ds.feature_dim > kSane) {
    throw FormatError("dataset: implausible header");
  }
  auto read_indices = [&](std::vector<std::size_t>& dst) {
    const auto count = read_u64_le(in, kFsds);
    if (count > n) throw FormatError("dataset: client index list longer than N");
    for (std::uint64_t i = 0; i < count; ++i) dst.push_back(read_u64_le(in, kFsds));
  };
  read_indices(ds.train_clients);
  read_indices(ds.heldout_clients);
  for (std::uint64_t c = 0; c < n; ++c) {
    const auto m = read_u64_le(in, kFsds);
    if (m > kSane) throw FormatError("dataset: implausible client size");
    ClientData client;
    if (m > 0) {
      std::vector<double> values(m * ds.feature_dim);
      for (auto& v : values) v = read_f64_le(in, kFsds);
      client.features = Tensor(Shape{m, ds.feature_dim}, std::move(values));
      for (std::uint64_t i = 0; i < m; ++i) client.labels.push_back(read_u32_le(in, kFsds));
    }
    ds.clients.push_back(std::move(client));
  }
  try {
    ds.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("dataset: ") + e.what());
  }
  return ds;
}

void save_dataset(const std::filesystem::path& path, const FederatedDataset& dataset,
                  const SyntheticSpec& spec) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(fmt::format("cannot open {} for writing", path.string()));
  write_dataset(out, dataset, spec);
}

FederatedDataset load_dataset(const std::filesystem::path& path, SyntheticSpec* spec) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(fmt::format("cannot open {}", path.string()));
  return read_dataset(in, spec);
}

std::vector<LabeledSample> read_idx(std::istream& images, std::istream& labels) {
  using namespace binary;
  constexpr std::string_view kImg = "IDX images";
  constexpr std::string_view kLbl = "IDX labels";
  const auto img_magic = read_u32_be(images, kImg);
  if (img_magic != 0x00000803u) {
    throw FormatError(fmt::format("{}: unsupported rank/type (magic {:08x})", kImg,
                                  img_magic));
  }
  const auto count = read_u32_be(images, kImg);
  const auto rows = read_u32_be(images, kImg);
  const auto cols = read_u32_be(images, kImg);
  const auto lbl_magic = read_u32_be(labels, kLbl);
  if (lbl_magic != 0x00000801u) {
    throw FormatError(fmt::format("{}: unsupported rank/type (magic {:08x})", kLbl,
                                  lbl_magic));
  }
  const auto label_count = read_u32_be(labels, kLbl);
  if (label_count != count) {
    throw FormatError(fmt::format("IDX: {} images but {} labels", count, label_count));
  }
  const std::size_t p = static_cast<std::size_t>(rows) * cols;
  if (p == 0) throw FormatError("IDX images: zero-sized image");
  std::vector<LabeledSample> out(count);
  std::vector<unsigned char> pixels(p);
  for (auto& s : out) {
    read_exact(images, reinterpret_cast<char*>(pixels.data()), p, kImg);
    s.features.resize(p);
    for (std::size_t i = 0; i < p; ++i) s.features[i] = pixels[i] / 255.0;
    unsigned char y = 0;
    read_exact(labels, reinterpret_cast<char*>(&y), 1, kLbl);
    s.label = y;
  }
  return out;
}

std::vector<LabeledSample> load_idx(const std::filesystem::path& images_path,
                                    const std::filesystem::path& labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) throw Error(fmt::format("cannot open {}", images_path.string()));
  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) throw Error(fmt::format("cannot open {}", labels_path.string()));
  return read_idx(images, labels);
}

}  // namespace fedsvm
