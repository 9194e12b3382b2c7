#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "projreg/errors.hpp"
#include "projreg/grid_signal.hpp"

namespace projreg {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// PGM (binary P5, maxval 255). Values are scaled to [0, 1] on read and
// quantised from [0, 1] on write; CSV is the exact-value format.
// ---------------------------------------------------------------------------

inline GridSignal read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());

  auto next_token = [&in, &path]() -> std::string {
    std::string tok;
    while (true) {
      int c = in.get();
      if (c == EOF) throw IoError("truncated PGM header in " + path.string());
      if (c == '#') {
        std::string line;
        std::getline(in, line);
        continue;
      }
      if (std::isspace(c)) {
        if (!tok.empty()) return tok;
        continue;
      }
      tok.push_back(char(c));
    }
  };

  if (next_token() != "P5") throw IoError(path.string() + ": not a binary PGM (P5)");
  const int width = std::stoi(next_token());
  const int height = std::stoi(next_token());
  const int maxval = std::stoi(next_token());
  if (width < 1 || height < 1) throw IoError(path.string() + ": bad PGM size");
  if (maxval != 255) {
    throw IoError(path.string() + ": unsupported PGM maxval " + std::to_string(maxval));
  }

  std::vector<unsigned char> raw(size_t(width) * height);
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (size_t(in.gcount()) != raw.size()) {
    throw IoError(path.string() + ": truncated PGM pixel data");
  }

  GridSignal out = GridSignal::zeros(GridShape{height, width});
  for (size_t i = 0; i < raw.size(); ++i) out.values[Eigen::Index(i)] = raw[i] / 255.0;
  return out;
}

inline void write_pgm(const fs::path& path, const GridSignal& img) {
  if (!img.shape) throw IoError("write_pgm: signal has no grid shape");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P5\n" << img.shape->cols << " " << img.shape->rows << "\n255\n";
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    const double clamped = std::clamp(img.values[i], 0.0, 1.0);
    out.put(char(static_cast<unsigned char>(std::lround(clamped * 255.0))));
  }
  if (!out) throw IoError("failed while writing " + path.string());
}

// ---------------------------------------------------------------------------
// CSV: no header, one line per grid row, full double precision.
// ---------------------------------------------------------------------------

inline GridSignal read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<double> values;
  int rows = 0, cols = -1;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() && in.peek() == EOF) break;
    int count = 0;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      try {
        values.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw IoError(path.string() + ": bad numeric cell '" + cell + "'");
      }
      ++count;
    }
    if (count == 0) throw IoError(path.string() + ": empty CSV row");
    if (cols >= 0 && count != cols) {
      throw IoError(path.string() + ": ragged CSV rows");
    }
    cols = count;
    ++rows;
  }
  if (rows == 0) throw IoError(path.string() + ": empty CSV file");
  Eigen::VectorXd v = Eigen::Map<Eigen::VectorXd>(values.data(), Eigen::Index(values.size()));
  return GridSignal(std::move(v), GridShape{rows, cols});
}

inline std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline void write_csv(const fs::path& path, const GridSignal& sig) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const GridShape shape = sig.shape ? *sig.shape : GridShape{1, int(sig.size())};
  for (int r = 0; r < shape.rows; ++r) {
    for (int c = 0; c < shape.cols; ++c) {
      if (c) out << ',';
      out << format_double(sig.values[Eigen::Index(r) * shape.cols + c]);
    }
    out << '\n';
  }
  if (!out) throw IoError("failed while writing " + path.string());
}

// ---------------------------------------------------------------------------
// Dataset directories: a manifest listing exact-value files, or a plain
// directory of .csv / .pgm images.
// ---------------------------------------------------------------------------

struct Dataset {
  std::vector<GridSignal> images;
  GridShape shape{0, 0};
  std::string provenance;
};

inline nlohmann::json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

inline void write_json_file(const fs::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed while writing " + path.string());
}

inline GridSignal read_image_any(const fs::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".csv") return read_csv(path);
  if (ext == ".pgm") return read_pgm(path);
  throw IoError(path.string() + ": unsupported image format '" + ext + "'");
}

inline Dataset load_dataset(const fs::path& path) {
  Dataset ds;
  std::vector<fs::path> files;

  if (fs::is_directory(path)) {
    const fs::path manifest = path / "manifest.json";
    if (fs::exists(manifest)) {
      const nlohmann::json j = read_json_file(manifest);
      if (!j.contains("files")) throw IoError(manifest.string() + ": missing 'files'");
      for (const auto& f : j["files"]) files.push_back(path / f.get<std::string>());
      ds.provenance = j.value("provenance", "");
    } else {
      for (const auto& entry : fs::directory_iterator(path)) {
        const std::string ext = entry.path().extension().string();
        if (ext == ".csv" || ext == ".pgm") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      ds.provenance = path.string();
    }
    if (files.empty()) throw IoError(path.string() + ": no dataset images found");
  } else if (fs::exists(path)) {
    files.push_back(path);
    ds.provenance = path.string();
  } else {
    throw IoError(path.string() + ": no such file or directory");
  }

  for (const auto& f : files) {
    GridSignal img = read_image_any(f);
    if (!ds.images.empty() && !(*img.shape == ds.shape)) {
      throw IoError(f.string() + ": image shape differs from the rest of the dataset");
    }
    ds.shape = *img.shape;
    ds.images.push_back(std::move(img));
  }
  return ds;
}

inline void write_dataset_manifest(const fs::path& dir,
                                   const std::vector<std::string>& files,
                                   GridShape shape, const std::string& provenance,
                                   nlohmann::json metadata = {}) {
  nlohmann::json j;
  j["format"] = "projreg-dataset";
  j["version"] = 1;
  j["shape"] = {{"rows", shape.rows}, {"cols", shape.cols}};
  j["provenance"] = provenance;
  j["files"] = files;
  j["metadata"] = std::move(metadata);
  write_json_file(dir / "manifest.json", j);
}

}  // namespace projreg
