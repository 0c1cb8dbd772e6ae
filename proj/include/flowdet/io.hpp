// File formats: UTF-8 key=value run configuration with strict unknown-key
// rejection, the FLOWDET1 checkpoint (magic, length-prefixed config echo,
// little-endian float64 parameter blocks in declaration order), CSV point
// sets (one point per row), raw images with an 8-byte header (u16 h, w, c,
// bit depth, little-endian), trace CSV and binary P6 heatmaps.
#pragma once

#include <flowdet/builder.hpp>
#include <flowdet/trace.hpp>

#include <string>
#include <utility>

namespace flowdet::io {

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string dataset = "rings";  // toy name, .csv path, or .img path
  Index dataset_n = 100000;       // generated points for toy names
  std::string out_dir = "run_out";
};

// Throws ConfigError carrying the offending line number on unknown keys or
// unparseable values.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::string& path);
std::string serialize_run_config(const RunConfig& cfg);

struct CheckpointMeta {
  ModelConfig model;
  Index bit_depth = 0;
};

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const FlowModel& model);
std::pair<CheckpointMeta, FlowModel> load_checkpoint(const std::string& path);

Matrix read_csv_matrix(const std::string& path);
void write_csv_matrix(const std::string& path, MatrixRef rows);

struct ImageData {
  Index h = 0, w = 0, c = 1, bits = 8;
  Matrix rows;  // integer-valued, one image per row, row-major (h, w, c)
};
ImageData read_images(const std::string& path);
void write_images(const std::string& path, const ImageData& data);

// Grayscale P6 scaled by the grid maximum; pixel (i, j) = grid(i, j).
void write_ppm(const std::string& path, MatrixRef grid);

void write_trace_csv(const std::string& path, const TrainTrace& trace);
TrainTrace read_trace_csv(const std::string& path);

void write_text_file(const std::string& path, const std::string& text);

// Resolves a dataset spec: a toy generator name (seeded, n points), a .csv
// file, or a .img file (dequantized with the file's bit depth; reported via
// bits_out, 0 for continuous sources).
Matrix load_dataset(const std::string& spec, Index n, std::uint64_t seed,
                    Index* bits_out = nullptr);

}  // namespace flowdet::io
