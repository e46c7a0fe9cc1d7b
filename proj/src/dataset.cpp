#include "hicome/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "hicome/rng.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace hicome::data {

std::string DatasetStats::to_json() const {
  nlohmann::ordered_json j;
  j["n_images"] = n_images;
  j["n_groups"] = n_groups;
  j["group_size_mean"] = group_size_mean;
  j["group_size_std"] = group_size_std;
  j["res_h_mean"] = res_h_mean;
  j["res_h_std"] = res_h_std;
  j["res_w_mean"] = res_w_mean;
  j["res_w_std"] = res_w_std;
  return j.dump(2);
}

namespace {

bool has_image_ext(const fs::path& p) {
  std::string e = p.extension().string();
  std::transform(e.begin(), e.end(), e.begin(), [](unsigned char c) { return std::tolower(c); });
  return e == ".png" || e == ".jpg" || e == ".jpeg";
}

struct MeanStd {
  double mean = 0.0, std = 0.0;
};

MeanStd population_stats(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  for (double x : xs) r.std += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(r.std / static_cast<double>(xs.size()));
  return r;
}

}  // namespace

GroupedDataset load_dataset(const std::string& root, bool strict) {
  const fs::path images_dir = fs::path(root) / "images";
  const fs::path gt_dir = fs::path(root) / "gt";
  if (!fs::is_directory(images_dir))
    throw std::runtime_error("load_dataset: missing " + images_dir.string());

  GroupedDataset ds;
  ds.root = root;

  std::vector<fs::path> group_dirs;
  for (const auto& e : fs::directory_iterator(images_dir))
    if (e.is_directory()) group_dirs.push_back(e.path());
  std::sort(group_dirs.begin(), group_dirs.end());

  for (const auto& gdir : group_dirs) {
    ImageGroup group;
    group.name = gdir.filename().string();
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(gdir))
      if (e.is_regular_file() && has_image_ext(e.path())) files.push_back(e.path());
    std::sort(files.begin(), files.end());

    for (const auto& f : files) {
      const std::string stem = f.stem().string();
      const fs::path mask_path = gt_dir / group.name / (stem + ".png");
      if (!fs::exists(mask_path)) {
        if (strict) throw std::runtime_error("load_dataset: no mask for " + f.string());
        std::cerr << "warning: skipping " << f.string() << " (no mask)\n";
        continue;
      }
      Sample s;
      s.stem = stem;
      s.image = read_image(f.string());
      s.mask = read_mask(mask_path.string());
      group.samples.push_back(std::move(s));
    }
    if (group.samples.empty()) throw std::runtime_error("load_dataset: empty group " + group.name);
    ds.groups.push_back(std::move(group));
  }
  if (ds.groups.empty()) throw std::runtime_error("load_dataset: no groups under " + root);
  return ds;
}

void save_dataset(const GroupedDataset& ds, const std::string& root) {
  for (const auto& g : ds.groups) {
    const fs::path idir = fs::path(root) / "images" / g.name;
    const fs::path mdir = fs::path(root) / "gt" / g.name;
    fs::create_directories(idir);
    fs::create_directories(mdir);
    for (const auto& s : g.samples) {
      write_image_png((idir / (s.stem + ".png")).string(), s.image);
      write_mask_png((mdir / (s.stem + ".png")).string(), s.mask);
    }
  }
}

std::vector<Finding> validate_dataset(const GroupedDataset& ds) {
  std::vector<Finding> out;
  for (const auto& g : ds.groups) {
    std::set<std::string> seen;
    for (const auto& s : g.samples) {
      if (!seen.insert(s.stem).second) out.push_back({"duplicate-stem", g.name, s.stem});
      if (s.mask.h != s.image.h || s.mask.w != s.image.w) {
        out.push_back({"shape-mismatch", g.name, s.stem});
        continue;
      }
      const int64_t fg = s.mask.foreground_count();
      if (fg == 0) out.push_back({"empty-mask", g.name, s.stem});
      if (fg == static_cast<int64_t>(s.mask.v.size())) out.push_back({"full-mask", g.name, s.stem});
    }
  }
  return out;
}

DatasetStats compute_stats(const GroupedDataset& ds) {
  if (ds.groups.empty()) throw std::invalid_argument("compute_stats: empty dataset");
  DatasetStats st;
  st.n_groups = ds.n_groups();
  st.n_images = ds.n_images();
  std::vector<double> sizes, hs, ws;
  for (const auto& g : ds.groups) {
    sizes.push_back(static_cast<double>(g.samples.size()));
    for (const auto& s : g.samples) {
      hs.push_back(s.image.h);
      ws.push_back(s.image.w);
    }
  }
  const auto gs = population_stats(sizes);
  const auto hh = population_stats(hs);
  const auto ww = population_stats(ws);
  st.group_size_mean = gs.mean;
  st.group_size_std = gs.std;
  st.res_h_mean = hh.mean;
  st.res_h_std = hh.std;
  st.res_w_mean = ww.mean;
  st.res_w_std = ww.std;
  return st;
}

// ------------------------------------------------------------------ synthetic

namespace {

enum class ShapeKind { Circle, Square, Triangle, Cross };

struct ClassDef {
  ShapeKind shape;
  float r, g, b;
  std::string name;
};

const std::vector<std::array<float, 3>>& palette() {
  static const std::vector<std::array<float, 3>> p = {
      {0.86f, 0.12f, 0.12f},  // red
      {0.12f, 0.55f, 0.86f},  // blue
      {0.12f, 0.72f, 0.22f},  // green
      {0.92f, 0.75f, 0.10f},  // yellow
      {0.62f, 0.22f, 0.78f},  // purple
      {0.95f, 0.48f, 0.10f},  // orange
      {0.10f, 0.75f, 0.72f},  // teal
      {0.88f, 0.32f, 0.62f},  // pink
  };
  return p;
}

const char* shape_name(ShapeKind k) {
  switch (k) {
    case ShapeKind::Circle: return "circle";
    case ShapeKind::Square: return "square";
    case ShapeKind::Triangle: return "triangle";
    case ShapeKind::Cross: return "cross";
  }
  return "?";
}

const char* color_name(int i) {
  static const char* names[] = {"red", "blue", "green", "yellow", "purple", "orange", "teal", "pink"};
  return names[i];
}

std::vector<ClassDef> class_table() {
  std::vector<ClassDef> t;
  const auto& pal = palette();
  for (size_t ci = 0; ci < pal.size(); ++ci)
    for (int si = 0; si < 4; ++si) {
      ClassDef d;
      d.shape = static_cast<ShapeKind>(si);
      d.r = pal[ci][0];
      d.g = pal[ci][1];
      d.b = pal[ci][2];
      d.name = std::string(shape_name(d.shape)) + "_" + color_name(static_cast<int>(ci));
      t.push_back(d);
    }
  return t;
}

bool inside_shape(ShapeKind k, double dy, double dx, double r) {
  switch (k) {
    case ShapeKind::Circle:
      return dy * dy + dx * dx <= r * r;
    case ShapeKind::Square:
      return std::fabs(dy) <= r * 0.85 && std::fabs(dx) <= r * 0.85;
    case ShapeKind::Triangle: {
      const double top = -r, bottom = r * 0.8;
      if (dy < top || dy > bottom) return false;
      const double half = (dy - top) / (bottom - top) * r;
      return std::fabs(dx) <= half;
    }
    case ShapeKind::Cross: {
      const double arm = r * 0.36;
      return (std::fabs(dx) <= arm && std::fabs(dy) <= r) ||
             (std::fabs(dy) <= arm && std::fabs(dx) <= r);
    }
  }
  return false;
}

struct Placement {
  double cy, cx, r;
};

void draw_instance(RGBImage& img, BinaryMask* gt, const ClassDef& cls, const Placement& p) {
  const int y0 = std::max(0, static_cast<int>(std::floor(p.cy - p.r - 1)));
  const int y1 = std::min(img.h - 1, static_cast<int>(std::ceil(p.cy + p.r + 1)));
  const int x0 = std::max(0, static_cast<int>(std::floor(p.cx - p.r - 1)));
  const int x1 = std::min(img.w - 1, static_cast<int>(std::ceil(p.cx + p.r + 1)));
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (inside_shape(cls.shape, y - p.cy, x - p.cx, p.r)) {
        img.at(y, x, 0) = cls.r;
        img.at(y, x, 1) = cls.g;
        img.at(y, x, 2) = cls.b;
        if (gt) gt->at(y, x) = 1;
      }
}

}  // namespace

int synthetic_class_capacity() { return static_cast<int>(class_table().size()); }

GroupedDataset generate_synthetic(const SyntheticSpec& spec) {
  if (spec.n_groups < 1 || spec.group_size < 1 || spec.n_distractors < 0)
    throw std::invalid_argument("generate_synthetic: counts must be >= 1");
  if (spec.image_size < 32)
    throw std::invalid_argument("generate_synthetic: image_size must be >= 32");
  const auto classes = class_table();
  if (spec.n_groups > static_cast<int>(classes.size()))
    throw std::invalid_argument("generate_synthetic: at most " + std::to_string(classes.size()) +
                                " distinct (shape,color) classes");
  if (spec.n_distractors > 0 && spec.n_groups < 2)
    throw std::invalid_argument("generate_synthetic: distractors need >= 2 groups");

  GroupedDataset ds;
  ds.root = "synthetic";
  Rng root_rng(spec.seed);
  const int s = spec.image_size;

  for (int gi = 0; gi < spec.n_groups; ++gi) {
    ImageGroup group;
    group.name = classes[static_cast<size_t>(gi)].name;
    for (int ii = 0; ii < spec.group_size; ++ii) {
      Rng rng = root_rng.fork(static_cast<uint64_t>(gi), static_cast<uint64_t>(ii));
      RGBImage img(s, s);
      const float bg = static_cast<float>(0.78 + 0.08 * rng.uniform());
      for (auto& px : img.rgb) px = bg;
      BinaryMask gt(s, s);

      // placements rejected on overlap; radius shrinks if crowded
      std::vector<Placement> placed;
      auto place = [&](double rmin, double rmax) {
        double r = rng.uniform(rmin, rmax) * s;
        for (int attempt = 0; attempt < 200; ++attempt) {
          const double margin = r + 2.0;
          const double cy = rng.uniform(margin, s - margin);
          const double cx = rng.uniform(margin, s - margin);
          bool ok = true;
          for (const auto& q : placed)
            if (std::hypot(cy - q.cy, cx - q.cx) < r + q.r + 2.0) {
              ok = false;
              break;
            }
          if (ok) {
            placed.push_back({cy, cx, r});
            return placed.back();
          }
          if (attempt % 40 == 39) r = std::max(0.06 * s, r * 0.8);
        }
        placed.push_back({s / 2.0, s / 2.0, r});
        return placed.back();
      };

      const Placement target = place(0.16, 0.24);
      std::vector<std::pair<ClassDef, Placement>> distractors;
      for (int d = 0; d < spec.n_distractors; ++d) {
        int other = gi;
        while (other == gi) other = static_cast<int>(rng.below(static_cast<uint64_t>(spec.n_groups)));
        distractors.emplace_back(classes[static_cast<size_t>(other)], place(0.10, 0.18));
      }
      for (const auto& [cls, pl] : distractors) draw_instance(img, nullptr, cls, pl);
      draw_instance(img, &gt, classes[static_cast<size_t>(gi)], target);

      Sample sample;
      std::ostringstream stem;
      stem << group.name << "_" << std::setw(3) << std::setfill('0') << ii;
      sample.stem = stem.str();
      sample.image = std::move(img);
      sample.mask = std::move(gt);
      group.samples.push_back(std::move(sample));
    }
    ds.groups.push_back(std::move(group));
  }
  return ds;
}

}  // namespace hicome::data
