#pragma once

#include <string>

#include "mrnn/models.hpp"
#include "mrnn/training.hpp"

namespace mrnn {

// Versioned JSON model files. Parameter arrays are stored row-major with
// shortest round-trip decimal encoding, so save -> load -> save is
// byte-identical and value-lossless. Files are written to a temporary and
// atomically renamed; a failed save never leaves a partial file.

inline constexpr int kModelFormatVersion = 1;

void save_model_file(const std::string& path, const Model& model,
                     const TrainConfig& cfg);

struct LoadedModel {
  Model model;
  TrainConfig config;
};

LoadedModel load_model_file(const std::string& path);

// Shared atomic text-file writer (temp file + rename).
void write_text_atomic(const std::string& path, const std::string& content);

// Shortest decimal string that parses back to exactly the same double.
std::string format_double(double x);

}  // namespace mrnn
