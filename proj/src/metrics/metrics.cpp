#include "protoseg/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>

#include <json.hpp>

#include "protoseg/core/error.hpp"

namespace protoseg::metrics {
namespace {

void require_same_grid(const BinaryMask& a, const BinaryMask& b, const char* what) {
  if (!(a.dims == b.dims) || a.values.size() != b.values.size())
    throw ShapeError(std::string(what) + ": masks " + to_string(a.dims) + " and " + to_string(b.dims));
  if (a.spacing != b.spacing) throw ShapeError(std::string(what) + ": voxel spacings differ");
}

constexpr double kInf = std::numeric_limits<double>::infinity();

// Exact 1-D squared distance transform of a sampled function
// (lower envelope of parabolas), positions x*spacing.
void edt_1d(const double* f, double* out, int n, double spacing, std::vector<int>& v, std::vector<double>& z) {
  v.assign(static_cast<std::size_t>(n), 0);
  z.assign(static_cast<std::size_t>(n) + 1, 0.0);
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (f[q] == kInf) continue;
    const double xq = q * spacing;
    while (k >= 0) {
      const int p = v[static_cast<std::size_t>(k)];
      const double xp = p * spacing;
      const double s = ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp));
      if (s <= z[static_cast<std::size_t>(k)]) {
        --k;
      } else {
        break;
      }
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    if (k == 0) {
      z[0] = -kInf;
    } else {
      const int p = v[static_cast<std::size_t>(k - 1)];
      const double xp = p * spacing;
      z[static_cast<std::size_t>(k)] = ((f[q] + xq * xq) - (f[p] + xp * xp)) / (2.0 * (xq - xp));
    }
    z[static_cast<std::size_t>(k) + 1] = kInf;
  }
  if (k < 0) {
    std::fill(out, out + n, kInf);
    return;
  }
  int j = 0;
  for (int q = 0; q < n; ++q) {
    const double xq = q * spacing;
    while (z[static_cast<std::size_t>(j) + 1] < xq) ++j;
    const int p = v[static_cast<std::size_t>(j)];
    const double dx = xq - p * spacing;
    out[q] = dx * dx + f[p];
  }
}

// Squared Euclidean distance from every voxel to the nearest seed.
std::vector<double> squared_edt(Dims3 d, const std::vector<std::size_t>& seeds, std::array<double, 3> sp) {
  std::vector<double> g(d.size(), kInf);
  for (std::size_t s : seeds) g[s] = 0.0;
  std::vector<int> v;
  std::vector<double> z;
  const int nmax = std::max({d.h, d.w, d.d});
  std::vector<double> line(static_cast<std::size_t>(nmax)), res(static_cast<std::size_t>(nmax));
  // d axis (contiguous)
  for (int i = 0; i < d.h; ++i)
    for (int j = 0; j < d.w; ++j) {
      double* p = g.data() + (static_cast<std::size_t>(i) * d.w + j) * d.d;
      edt_1d(p, res.data(), d.d, sp[2], v, z);
      std::copy(res.begin(), res.begin() + d.d, p);
    }
  // w axis
  for (int i = 0; i < d.h; ++i)
    for (int k = 0; k < d.d; ++k) {
      for (int j = 0; j < d.w; ++j) line[static_cast<std::size_t>(j)] = g[(static_cast<std::size_t>(i) * d.w + j) * d.d + k];
      edt_1d(line.data(), res.data(), d.w, sp[1], v, z);
      for (int j = 0; j < d.w; ++j) g[(static_cast<std::size_t>(i) * d.w + j) * d.d + k] = res[static_cast<std::size_t>(j)];
    }
  // h axis
  for (int j = 0; j < d.w; ++j)
    for (int k = 0; k < d.d; ++k) {
      for (int i = 0; i < d.h; ++i) line[static_cast<std::size_t>(i)] = g[(static_cast<std::size_t>(i) * d.w + j) * d.d + k];
      edt_1d(line.data(), res.data(), d.h, sp[0], v, z);
      for (int i = 0; i < d.h; ++i) g[(static_cast<std::size_t>(i) * d.w + j) * d.d + k] = res[static_cast<std::size_t>(i)];
    }
  return g;
}

}  // namespace

std::size_t BinaryMask::count() const {
  return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](std::uint8_t v) { return v != 0; }));
}

const char* region_name(Region r) {
  switch (r) {
    case Region::WT: return "WT";
    case Region::TC: return "TC";
    case Region::ET: return "ET";
  }
  return "?";
}

std::array<BinaryMask, 3> compose_regions(const data::LabelVolume& labels, std::array<double, 3> spacing) {
  std::array<BinaryMask, 3> out;
  for (auto& m : out) {
    m.dims = labels.dims;
    m.spacing = spacing;
    m.values.assign(labels.values.size(), 0);
  }
  for (std::size_t i = 0; i < labels.values.size(); ++i) {
    const std::uint8_t l = labels.values[i];
    if (l > 3) throw LabelDomainError("label " + std::to_string(l) + " outside {0,1,2,3}");
    out[0].values[i] = l != 0;
    out[1].values[i] = l == 1 || l == 3;
    out[2].values[i] = l == 3;
  }
  return out;
}

double dice_score(const BinaryMask& a, const BinaryMask& b) {
  require_same_grid(a, b, "dice_score");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    const bool x = a.values[i] != 0, y = b.values[i] != 0;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

double grid_diagonal(Dims3 d, std::array<double, 3> s) {
  const double x = (d.h - 1) * s[0], y = (d.w - 1) * s[1], z = (d.d - 1) * s[2];
  return std::sqrt(x * x + y * y + z * z);
}

std::vector<std::size_t> surface_voxels(const BinaryMask& m) {
  const Dims3 d = m.dims;
  std::vector<std::size_t> out;
  auto inside = [&](int i, int j, int k) {
    if (i < 0 || j < 0 || k < 0 || i >= d.h || j >= d.w || k >= d.d) return false;
    return m.values[(static_cast<std::size_t>(i) * d.w + j) * d.d + k] != 0;
  };
  for (int i = 0; i < d.h; ++i)
    for (int j = 0; j < d.w; ++j)
      for (int k = 0; k < d.d; ++k) {
        if (!inside(i, j, k)) continue;
        if (!inside(i - 1, j, k) || !inside(i + 1, j, k) || !inside(i, j - 1, k) || !inside(i, j + 1, k) ||
            !inside(i, j, k - 1) || !inside(i, j, k + 1))
          out.push_back((static_cast<std::size_t>(i) * d.w + j) * d.d + k);
      }
  return out;
}

double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw ShapeError("percentile of an empty list");
  std::sort(values.begin(), values.end());
  const double pos = q / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

double hd95(const BinaryMask& a, const BinaryMask& b, const Hd95Options& options) {
  require_same_grid(a, b, "hd95");
  const auto sa = surface_voxels(a), sb = surface_voxels(b);
  if (sa.empty() && sb.empty()) return 0.0;
  if (sa.empty() || sb.empty()) return options.empty_penalty.value_or(grid_diagonal(a.dims, a.spacing));
  const auto da = squared_edt(a.dims, sa, a.spacing);
  const auto db = squared_edt(b.dims, sb, b.spacing);
  std::vector<double> pooled;
  pooled.reserve(sa.size() + sb.size());
  for (std::size_t x : sa) pooled.push_back(std::sqrt(db[x]));
  for (std::size_t y : sb) pooled.push_back(std::sqrt(da[y]));
  return percentile(std::move(pooled), 95.0);
}

RegionReport evaluate_case(const data::LabelVolume& pred, const data::LabelVolume& truth,
                           std::array<double, 3> spacing, const Hd95Options& options) {
  if (!(pred.dims == truth.dims))
    throw ShapeError("evaluate_case: prediction " + to_string(pred.dims) + " vs truth " + to_string(truth.dims));
  const auto p = compose_regions(pred, spacing), t = compose_regions(truth, spacing);
  RegionReport r;
  for (std::size_t i = 0; i < 3; ++i) {
    r.dice[i] = dice_score(p[i], t[i]);
    r.hd95[i] = hd95(p[i], t[i], options);
  }
  return r;
}

RegionReport mean_report(const std::vector<RegionReport>& reports) {
  RegionReport m;
  m.case_id = "mean";
  if (reports.empty()) return m;
  for (const auto& r : reports)
    for (std::size_t i = 0; i < 3; ++i) {
      m.dice[i] += r.dice[i];
      m.hd95[i] += r.hd95[i];
    }
  for (std::size_t i = 0; i < 3; ++i) {
    m.dice[i] /= static_cast<double>(reports.size());
    m.hd95[i] /= static_cast<double>(reports.size());
  }
  return m;
}

void write_report_csv(std::ostream& os, const std::vector<RegionReport>& reports) {
  os << "case_id,region,dice,hd95\n" << std::setprecision(10);
  auto rows = reports;
  rows.push_back(mean_report(reports));
  for (const auto& r : rows)
    for (Region g : kRegions) {
      const auto i = static_cast<std::size_t>(g);
      os << r.case_id << ',' << region_name(g) << ',' << r.dice[i] << ',' << r.hd95[i] << '\n';
    }
}

void write_report_json(std::ostream& os, const std::vector<RegionReport>& reports) {
  auto row = [](const RegionReport& r) {
    nlohmann::json j;
    j["case_id"] = r.case_id;
    for (Region g : kRegions) {
      const auto i = static_cast<std::size_t>(g);
      j[region_name(g)] = {{"dice", r.dice[i]}, {"hd95", r.hd95[i]}};
    }
    return j;
  };
  nlohmann::json doc;
  doc["cases"] = nlohmann::json::array();
  for (const auto& r : reports) doc["cases"].push_back(row(r));
  doc["mean"] = row(mean_report(reports));
  os << doc.dump(2) << '\n';
}

}  // namespace protoseg::metrics
