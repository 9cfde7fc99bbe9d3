#include <array>
#include <cmath>
#include <functional>
#include <map>
#include <numbers>

#include "kgnn/datasets.hpp"
#include "kgnn/error.hpp"
#include "kgnn/rng.hpp"

namespace kgnn::data {
namespace {

using Rgb = std::array<double, 3>;
// Point-in-glyph test in glyph coordinates (unit radius, y down).
using Glyph = std::function<bool(double, double)>;

const std::map<std::string, Rgb>& colors() {
  static const std::map<std::string, Rgb> c = {
      {"red", {0.80, 0.08, 0.10}},   {"white", {0.95, 0.95, 0.95}}, {"blue", {0.08, 0.25, 0.72}},
      {"yellow", {0.97, 0.82, 0.10}}, {"black", {0.05, 0.05, 0.05}},
  };
  return c;
}

bool in_triangle(double x, double y) {
  // Upward equilateral triangle with circumradius 1.
  const double s3 = std::sqrt(3.0);
  return y <= 0.5 && s3 * x - y <= 1.0 && -s3 * x - y <= 1.0;
}

const std::map<std::string, Glyph>& shapes() {
  static const std::map<std::string, Glyph> s = {
      {"circle", [](double x, double y) { return x * x + y * y <= 1.0; }},
      {"triangle", in_triangle},
      {"square", [](double x, double y) { return std::max(std::abs(x), std::abs(y)) <= 0.82; }},
      {"octagon",
       [](double x, double y) {
         const double ax = std::abs(x), ay = std::abs(y);
         return std::max({ax, ay, (ax + ay) / std::numbers::sqrt2}) <= 0.92;
       }},
  };
  return s;
}

bool bar(double x, double y, double hw, double hh) { return std::abs(x) <= hw && std::abs(y) <= hh; }

bool arrow_left(double x, double y) {
  return (bar(x - 0.15, y, 0.45, 0.11)) || (x >= -0.62 && x <= -0.15 && std::abs(y) <= (x + 0.62) * 1.1);
}

const std::map<std::string, Glyph>& icons() {
  static const std::map<std::string, Glyph> i = {
      {"bar_v", [](double x, double y) { return bar(x, y, 0.13, 0.6); }},
      {"bar_h", [](double x, double y) { return bar(x, y, 0.6, 0.15); }},
      {"chevron", [](double x, double y) { return std::abs(y) <= 0.55 && std::abs(x + 0.9 * std::abs(y) - 0.25) <= 0.15; }},
      {"cross",
       [](double x, double y) {
         return x * x + y * y <= 0.36 &&
                (std::abs(x - y) / std::numbers::sqrt2 <= 0.1 || std::abs(x + y) / std::numbers::sqrt2 <= 0.1);
       }},
      {"diag", [](double x, double y) { return x * x + y * y <= 0.42 && std::abs(x + y) / std::numbers::sqrt2 <= 0.12; }},
      {"ring",
       [](double x, double y) {
         const double r = std::sqrt(x * x + y * y);
         return r >= 0.33 && r <= 0.55;
       }},
      {"zigzag",
       [](double x, double y) {
         if (std::abs(x) > 0.6) return false;
         const double phase = std::fmod(x + 0.6, 0.4) / 0.4;
         const double wave = 0.25 * (phase < 0.5 ? 4 * phase - 1 : 3 - 4 * phase);
         return std::abs(y - wave) <= 0.12;
       }},
      {"arrow_left", arrow_left},
      {"arrow_right", [](double x, double y) { return arrow_left(-x, y); }},
      {"arrow_up", [](double x, double y) { return arrow_left(y, x); }},
      {"dot", [](double x, double y) { return x * x + y * y <= 0.07; }},
      {"plus", [](double x, double y) { return bar(x, y, 0.12, 0.5) || bar(x, y, 0.5, 0.12); }},
      {"square", [](double x, double y) { return bar(x, y, 0.35, 0.35); }},
      {"two_bars", [](double x, double y) { return bar(x, y - 0.25, 0.55, 0.1) || bar(x, y + 0.25, 0.55, 0.1); }},
  };
  return i;
}

template <class M>
const typename M::mapped_type& lookup(const M& m, const std::string& key, const char* what, const std::string& label) {
  auto it = m.find(key);
  if (it == m.end()) throw ConfigError("class '" + label + "': unknown " + what + " '" + key + "'");
  return it->second;
}

double luminance(const Rgb& c) { return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]; }

struct ResolvedDef {
  const Glyph* shape;
  const Glyph* icon;
  Rgb fill, border, ink;
  bool triangle;
};

ResolvedDef resolve(const ClassDef& d) {
  ResolvedDef r;
  r.shape = &lookup(shapes(), d.shape, "shape glyph", d.label);
  r.icon = &lookup(icons(), d.icon, "icon glyph", d.label);
  r.fill = lookup(colors(), d.fill, "color", d.label);
  r.border = lookup(colors(), d.border, "color", d.label);
  r.ink = luminance(r.fill) > 0.5 ? colors().at("black") : colors().at("white");
  r.triangle = d.shape == "triangle";
  return r;
}

constexpr int kSuper = 4;
constexpr double kBaseRadius = 12.0;
constexpr double kBorderRatio = 0.78;

void render(const ResolvedDef& d, Rng& rng, float* out) {
  const double cx = 15.5 + rng.uniform(-2.0, 2.0), cy = 15.5 + rng.uniform(-2.0, 2.0);
  const double radius = kBaseRadius * rng.uniform(0.9, 1.1);
  // Background: a smooth vertical gradient between two muted colors.
  Rgb top, bottom;
  for (int c = 0; c < 3; ++c) {
    top[c] = rng.uniform(0.25, 0.75);
    bottom[c] = std::clamp(top[c] + rng.uniform(-0.2, 0.2), 0.0, 1.0);
  }
  const double icon_scale = d.triangle ? 0.5 : 0.62;
  const double icon_dy = d.triangle ? 0.18 : 0.0;
  const std::size_t plane = kImageSide * kImageSide;
  for (std::size_t py = 0; py < kImageSide; ++py) {
    for (std::size_t px = 0; px < kImageSide; ++px) {
      Rgb acc{0, 0, 0};
      for (int sy = 0; sy < kSuper; ++sy) {
        for (int sx = 0; sx < kSuper; ++sx) {
          const double fx = static_cast<double>(px) + (sx + 0.5) / kSuper;
          const double fy = static_cast<double>(py) + (sy + 0.5) / kSuper;
          const double u = (fx - 0.5 - cx) / radius, v = (fy - 0.5 - cy) / radius;
          Rgb c;
          if (!(*d.shape)(u, v)) {
            const double t = fy / static_cast<double>(kImageSide);
            for (int k = 0; k < 3; ++k) c[k] = (1 - t) * top[k] + t * bottom[k];
          } else if (!(*d.shape)(u / kBorderRatio, v / kBorderRatio)) {
            c = d.border;
          } else if ((*d.icon)(u / icon_scale, (v - icon_dy) / icon_scale)) {
            c = d.ink;
          } else {
            c = d.fill;
          }
          for (int k = 0; k < 3; ++k) acc[k] += c[k];
        }
      }
      for (std::size_t k = 0; k < 3; ++k)
        out[k * plane + py * kImageSide + px] = static_cast<float>(acc[k] / (kSuper * kSuper));
    }
  }
}

std::string local_name(const std::string& iri) {
  const std::size_t slash = iri.rfind('/');
  return slash == std::string::npos ? iri : iri.substr(slash + 1);
}

}  // namespace

std::vector<ClassDef> class_defs_from_kg(const kg::KnowledgeGraph& kg, const std::vector<std::string>& labels) {
  std::vector<ClassDef> defs;
  for (const std::string& label : labels) {
    const auto hits = kg.entities_with_label(label);
    if (hits.size() != 1)
      throw MappingError("label '" + label + "' is linked to " + std::to_string(hits.size()) + " entities");
    auto attr = [&](std::string_view pred) {
      std::vector<std::string> found;
      for (std::size_t i : kg.with_subject(hits[0].value)) {
        const kg::Triple& t = kg.triples()[i];
        if (t.predicate.value != pred) continue;
        if (const auto* o = std::get_if<kg::Iri>(&t.object)) found.push_back(local_name(o->value));
      }
      if (found.size() != 1)
        throw MappingError("class '" + label + "' has " + std::to_string(found.size()) + " values for " +
                           std::string(pred));
      return found[0];
    };
    defs.push_back({label, attr(kHasShape), attr(kHasColor), attr(kHasBorderColor), attr(kHasIcon)});
  }
  return defs;
}

LabeledDataset generate_synthetic(const std::vector<ClassDef>& defs, std::size_t n_per_class, std::uint64_t seed,
                                  const std::string& domain_tag) {
  std::vector<ResolvedDef> resolved;
  LabeledDataset ds;
  ds.domain_tag = domain_tag;
  for (const ClassDef& d : defs) {
    resolved.push_back(resolve(d));
    ds.label_names.push_back(d.label);
  }
  ds.labels.reserve(defs.size() * n_per_class);
  ds.pixels.resize(defs.size() * n_per_class * kImagePixels);
  std::size_t idx = 0;
  for (std::size_t c = 0; c < defs.size(); ++c) {
    for (std::size_t i = 0; i < n_per_class; ++i, ++idx) {
      Rng rng(derive_seed(derive_seed(seed, c), i));
      render(resolved[c], rng, ds.pixels.data() + idx * kImagePixels);
      ds.labels.push_back(c);
    }
  }
  return ds;
}

}  // namespace kgnn::data
