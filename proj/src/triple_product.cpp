#include "shseed/triple_product.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>
#include <random>

namespace shseed {

namespace {

bool selection_rules_allow(int li, int lj, int lk) {
  if ((li + lj + lk) % 2 != 0) return false;
  return li <= lj + lk && lj <= li + lk && lk <= li + lj;
}

bool m_rule_allows(int mi, int mj, int mk) {
  const int a = std::abs(mi), b = std::abs(mj), c = std::abs(mk);
  const int negatives = (mi < 0) + (mj < 0) + (mk < 0);
  if (negatives % 2 != 0) return false;
  return a == b + c || b == a + c || c == a + b;
}

template <typename T>
void write_le(std::ostream& os, T value) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts unsupported");
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  T value{};
  is.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!is) throw ConfigError("truncated tensor cache file");
  return value;
}

}  // namespace

TripleProductTensor::TripleProductTensor(int band_count, std::vector<Entry> entries)
    : band_count_(band_count), entries_(std::move(entries)) {
  std::sort(entries_.begin(), entries_.end(), [](const Entry& x, const Entry& y) {
    return std::tie(x.i, x.j, x.k) < std::tie(y.i, y.j, y.k);
  });
  build_rows();
}

void TripleProductTensor::build_rows() {
  const std::size_t count = static_cast<std::size_t>(sh_count(band_count_));
  // Per row i: pairs (j, k) with j <= k. Off-diagonal pairs stand for both orders.
  std::vector<std::vector<std::pair<std::array<std::uint32_t, 2>, double>>> rows(count);
  for (const Entry& e : entries_) {
    std::array<std::uint32_t, 3> idx{e.i, e.j, e.k};
    std::sort(idx.begin(), idx.end());
    std::array<std::uint32_t, 3> last{~0u, ~0u, ~0u};
    for (int r = 0; r < 3; ++r) {
      if (idx[r] == last[0]) continue;  // duplicate row index
      last[0] = idx[r];
      std::array<std::uint32_t, 2> rest{};
      int n = 0;
      for (int q = 0; q < 3; ++q) {
        if (q != r) rest[n++] = idx[q];
      }
      rows[idx[r]].push_back({rest, e.value});
    }
  }
  row_start_.assign(count + 1, 0);
  diag_start_.assign(count + 1, 0);
  cols_j_.clear();
  cols_k_.clear();
  values_.clear();
  diag_cols_.clear();
  diag_values_.clear();
  expanded_size_ = 0;
  for (std::size_t i = 0; i < count; ++i) {
    row_start_[i] = static_cast<std::uint32_t>(cols_j_.size());
    diag_start_[i] = static_cast<std::uint32_t>(diag_cols_.size());
    auto& row = rows[i];
    std::sort(row.begin(), row.end());
    for (const auto& [jk, v] : row) {
      if (jk[0] == jk[1]) {
        diag_cols_.push_back(jk[0]);
        diag_values_.push_back(v);
        expanded_size_ += 1;
      } else {
        cols_j_.push_back(jk[0]);
        cols_k_.push_back(jk[1]);
        values_.push_back(v);
        expanded_size_ += 2;
      }
    }
  }
  row_start_[count] = static_cast<std::uint32_t>(cols_j_.size());
  diag_start_[count] = static_cast<std::uint32_t>(diag_cols_.size());
}

TripleProductTensor TripleProductTensor::compute(int band_count) {
  if (band_count < 1 || band_count > kMaxBandCount) {
    throw ConfigError("triple product tensor supports band counts 1.." + std::to_string(kMaxBandCount));
  }
  const int count = sh_count(band_count);
  const QuadratureGrid grid = quadrature_for_degree(3 * (band_count - 1));
  // Basis table laid out [i][sample] for contiguous inner products.
  std::vector<double> y(static_cast<std::size_t>(count) * grid.size());
  std::vector<double> tmp(count);
  for (std::size_t s = 0; s < grid.size(); ++s) {
    eval_basis(grid.directions[s], band_count, tmp);
    for (int i = 0; i < count; ++i) y[i * grid.size() + s] = tmp[i];
  }
  std::vector<int> band(count), order(count);
  for (int l = 0; l < band_count; ++l) {
    for (int m = -l; m <= l; ++m) {
      band[sh_index(l, m)] = l;
      order[sh_index(l, m)] = m;
    }
  }
  std::vector<double> wij(grid.size());
  std::vector<Entry> entries;
  for (int i = 0; i < count; ++i) {
    for (int j = i; j < count; ++j) {
      for (std::size_t s = 0; s < grid.size(); ++s) {
        wij[s] = grid.weights[s] * y[i * grid.size() + s] * y[j * grid.size() + s];
      }
      for (int k = j; k < count; ++k) {
        if (!selection_rules_allow(band[i], band[j], band[k])) continue;
        if (!m_rule_allows(order[i], order[j], order[k])) continue;
        const double* yk = &y[k * grid.size()];
        double sum = 0.0;
        for (std::size_t s = 0; s < grid.size(); ++s) sum += wij[s] * yk[s];
        if (std::abs(sum) >= kDropThreshold) {
          entries.push_back({static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                             static_cast<std::uint32_t>(k), sum});
        }
      }
    }
  }
  return TripleProductTensor(band_count, std::move(entries));
}

std::filesystem::path TripleProductTensor::cache_directory() {
  if (const char* dir = std::getenv("SHSEED_CACHE_DIR"); dir != nullptr && *dir != '\0') {
    return dir;
  }
  if (const char* xdg = std::getenv("XDG_CACHE_HOME"); xdg != nullptr && *xdg != '\0') {
    return std::filesystem::path(xdg) / "shseed";
  }
  if (const char* home = std::getenv("HOME"); home != nullptr && *home != '\0') {
    return std::filesystem::path(home) / ".cache" / "shseed";
  }
  return std::filesystem::temp_directory_path() / "shseed";
}

std::filesystem::path TripleProductTensor::cache_file(int band_count) {
  return cache_directory() / ("triple_product_n" + std::to_string(band_count) + ".shc");
}

void TripleProductTensor::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ConfigError("cannot write tensor cache: " + path.string());
  os.write("SHC1", 4);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(band_count_));
  write_le<std::uint64_t>(os, static_cast<std::uint64_t>(entries_.size()));
  for (const Entry& e : entries_) {
    write_le(os, e.i);
    write_le(os, e.j);
    write_le(os, e.k);
    write_le(os, e.value);
  }
  if (!os) throw ConfigError("failed writing tensor cache: " + path.string());
}

TripleProductTensor TripleProductTensor::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open tensor cache: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SHC1", 4) != 0) throw ConfigError("bad tensor cache magic: " + path.string());
  const auto band_count = static_cast<int>(read_le<std::uint32_t>(is));
  if (band_count < 1 || band_count > kMaxBandCount) throw ConfigError("bad band count in tensor cache");
  const auto count = read_le<std::uint64_t>(is);
  const auto limit = static_cast<std::uint32_t>(sh_count(band_count));
  std::vector<Entry> entries;
  entries.reserve(count);
  for (std::uint64_t n = 0; n < count; ++n) {
    Entry e{};
    e.i = read_le<std::uint32_t>(is);
    e.j = read_le<std::uint32_t>(is);
    e.k = read_le<std::uint32_t>(is);
    e.value = read_le<double>(is);
    if (e.i >= limit || e.j >= limit || e.k >= limit) throw ConfigError("tensor cache index out of range");
    entries.push_back(e);
  }
  return TripleProductTensor(band_count, std::move(entries));
}

std::shared_ptr<const TripleProductTensor> TripleProductTensor::get(int band_count) {
  static std::mutex mutex;
  static std::map<int, std::shared_ptr<const TripleProductTensor>> memory;
  std::lock_guard lock(mutex);
  if (auto it = memory.find(band_count); it != memory.end()) return it->second;

  std::shared_ptr<const TripleProductTensor> tensor;
  const auto file = cache_file(band_count);
  std::error_code ec;
  if (std::filesystem::exists(file, ec)) {
    try {
      auto loaded = load(file);
      if (loaded.band_count() == band_count) {
        tensor = std::make_shared<const TripleProductTensor>(std::move(loaded));
      }
    } catch (const ConfigError&) {
      // Corrupt cache: recompute and overwrite below.
    }
  }
  if (!tensor) {
    tensor = std::make_shared<const TripleProductTensor>(compute(band_count));
    std::filesystem::create_directories(file.parent_path(), ec);
    if (!ec) {
      const auto tmp = file.string() + ".tmp" + std::to_string(std::random_device{}());
      try {
        tensor->save(tmp);
        std::filesystem::rename(tmp, file, ec);
      } catch (const ConfigError&) {
        std::filesystem::remove(tmp, ec);
      }
    }
  }
  memory.emplace(band_count, tensor);
  return tensor;
}

double TripleProductTensor::value(int i, int j, int k) const {
  std::array<std::uint32_t, 3> idx{static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j),
                                   static_cast<std::uint32_t>(k)};
  std::sort(idx.begin(), idx.end());
  const Entry key{idx[0], idx[1], idx[2], 0.0};
  auto it = std::lower_bound(entries_.begin(), entries_.end(), key, [](const Entry& x, const Entry& y) {
    return std::tie(x.i, x.j, x.k) < std::tie(y.i, y.j, y.k);
  });
  if (it != entries_.end() && it->i == idx[0] && it->j == idx[1] && it->k == idx[2]) return it->value;
  return 0.0;
}

void TripleProductTensor::product(std::span<const double> a, std::span<const double> b,
                                  std::span<double> out) const {
  const std::size_t count = row_start_.size() - 1;
  const std::uint32_t* cj = cols_j_.data();
  const std::uint32_t* ck = cols_k_.data();
  const double* cv = values_.data();
  const std::uint32_t* dj = diag_cols_.data();
  const double* dv = diag_values_.data();
  const double* pa = a.data();
  const double* pb = b.data();
  for (std::size_t i = 0; i < count; ++i) {
    double sum = 0.0;
    for (std::uint32_t e = row_start_[i]; e < row_start_[i + 1]; ++e) {
      sum += cv[e] * (pa[cj[e]] * pb[ck[e]] + pa[ck[e]] * pb[cj[e]]);
    }
    for (std::uint32_t e = diag_start_[i]; e < diag_start_[i + 1]; ++e) {
      sum += dv[e] * (pa[dj[e]] * pb[dj[e]]);
    }
    out[i] = sum;
  }
}

void TripleProductTensor::square(std::span<const double> a, std::span<double> out) const {
  const std::size_t count = row_start_.size() - 1;
  const std::uint32_t* cj = cols_j_.data();
  const std::uint32_t* ck = cols_k_.data();
  const double* cv = values_.data();
  const std::uint32_t* dj = diag_cols_.data();
  const double* dv = diag_values_.data();
  const double* pa = a.data();
  for (std::size_t i = 0; i < count; ++i) {
    double off = 0.0, diag = 0.0;
    for (std::uint32_t e = row_start_[i]; e < row_start_[i + 1]; ++e) off += cv[e] * (pa[cj[e]] * pa[ck[e]]);
    for (std::uint32_t e = diag_start_[i]; e < diag_start_[i + 1]; ++e) diag += dv[e] * (pa[dj[e]] * pa[dj[e]]);
    out[i] = 2.0 * off + diag;
  }
}

SHVector sh_product(const SHVector& a, const SHVector& b) {
  if (a.band_count() != b.band_count()) throw ConfigError("band count mismatch in sh_product");
  const auto tensor = TripleProductTensor::get(a.band_count());
  SHVector out(a.band_count());
  tensor->product(a.coeffs(), b.coeffs(), out.coeffs());
  return out;
}

ShProductGrad sh_product_vjp(const SHVector& a, const SHVector& b, const SHVector& grad_out) {
  if (a.band_count() != b.band_count() || a.band_count() != grad_out.band_count()) {
    throw ConfigError("band count mismatch in sh_product_vjp");
  }
  return {sh_product(grad_out, b), sh_product(grad_out, a)};
}

}  // namespace shseed
