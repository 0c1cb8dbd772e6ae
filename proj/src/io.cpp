#include <flowdet/io.hpp>

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint and image formats assume a little-endian host");

namespace flowdet::io {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

Real parse_real(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const Real r = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("expected a number, got '" + v + "'", line);
  }
}

Index parse_index(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const long long r = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<Index>(r);
  } catch (const std::exception&) {
    throw ConfigError("expected an integer, got '" + v + "'", line);
  }
}

std::uint64_t parse_u64(const std::string& v, int line) {
  try {
    std::size_t used = 0;
    const unsigned long long r = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("expected an unsigned integer, got '" + v + "'", line);
  }
}

std::string fmt_real(Real v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Key dispatch shared by run configs and checkpoint headers. Returns false
// when the key is not recognized.
bool apply_key(RunConfig& cfg, const std::string& key, const std::string& value,
               int line) {
  ModelConfig& m = cfg.model;
  TrainConfig& t = cfg.train;
  if (key == "d") m.d = parse_index(value, line);
  else if (key == "levels") m.levels = parse_index(value, line);
  else if (key == "blocks_per_level") m.blocks_per_level = parse_index(value, line);
  else if (key == "split_fraction") m.split_fraction = parse_real(value, line);
  else if (key == "k") m.k = parse_index(value, line);
  else if (key == "bins") m.bins = parse_index(value, line);
  else if (key == "heads") m.heads = parse_index(value, line);
  else if (key == "hidden") m.hidden = parse_index(value, line);
  else if (key == "coupling_split") m.coupling_split = parse_index(value, line);
  else if (key == "beta") { m.beta = parse_real(value, line); t.beta = m.beta; }
  else if (key == "base") {
    try { m.base = base_from_string(value); }
    catch (const InvalidArgument& e) { throw ConfigError(e.what(), line); }
  }
  else if (key == "image_h") m.image_h = parse_index(value, line);
  else if (key == "image_w") m.image_w = parse_index(value, line);
  else if (key == "image_c") m.image_c = parse_index(value, line);
  else if (key == "ablation") {
    try { m.ablation = ablation_from_string(value); }
    catch (const InvalidArgument& e) { throw ConfigError(e.what(), line); }
    t.ablation = m.ablation;
  }
  else if (key == "seed") { t.seed = parse_u64(value, line); m.init_seed = t.seed; }
  else if (key == "steps") t.steps = parse_index(value, line);
  else if (key == "batch") t.batch = parse_index(value, line);
  else if (key == "lr_start") t.lr_start = parse_real(value, line);
  else if (key == "lr_end") t.lr_end = parse_real(value, line);
  else if (key == "decay_steps") t.decay_steps = parse_real(value, line);
  else if (key == "decay_rate") t.decay_rate = parse_real(value, line);
  else if (key == "transport_lambda") t.transport_lambda = parse_real(value, line);
  else if (key == "bit_depth") t.bit_depth = parse_index(value, line);
  else if (key == "holdout_fraction") t.holdout_fraction = parse_real(value, line);
  else if (key == "dataset") cfg.dataset = value;
  else if (key == "dataset_n") cfg.dataset_n = parse_index(value, line);
  else if (key == "out_dir") cfg.out_dir = value;
  else return false;
  return true;
}

}  // namespace

RunConfig parse_run_config(const std::string& text) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string stripped = trim(raw);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ConfigError("expected key = value", line);
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty()) throw ConfigError("empty key", line);
    if (!apply_key(cfg, key, value, line))
      throw ConfigError("unknown key '" + key + "'", line);
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string serialize_run_config(const RunConfig& cfg) {
  const ModelConfig& m = cfg.model;
  const TrainConfig& t = cfg.train;
  std::ostringstream out;
  out << "# model\n";
  out << "d = " << m.d << "\n";
  out << "levels = " << m.levels << "\n";
  out << "blocks_per_level = " << m.blocks_per_level << "\n";
  out << "split_fraction = " << fmt_real(m.split_fraction) << "\n";
  out << "k = " << m.k << "\n";
  out << "bins = " << m.bins << "\n";
  out << "heads = " << m.heads << "\n";
  out << "hidden = " << m.hidden << "\n";
  out << "coupling_split = " << m.coupling_split << "\n";
  out << "beta = " << fmt_real(m.beta) << "\n";
  out << "base = " << to_string(m.base) << "\n";
  out << "image_h = " << m.image_h << "\n";
  out << "image_w = " << m.image_w << "\n";
  out << "image_c = " << m.image_c << "\n";
  out << "ablation = " << to_string(m.ablation) << "\n";
  out << "# training\n";
  out << "seed = " << t.seed << "\n";
  out << "steps = " << t.steps << "\n";
  out << "batch = " << t.batch << "\n";
  out << "lr_start = " << fmt_real(t.lr_start) << "\n";
  out << "lr_end = " << fmt_real(t.lr_end) << "\n";
  out << "decay_steps = " << fmt_real(t.decay_steps) << "\n";
  out << "decay_rate = " << fmt_real(t.decay_rate) << "\n";
  out << "transport_lambda = " << fmt_real(t.transport_lambda) << "\n";
  out << "bit_depth = " << t.bit_depth << "\n";
  out << "holdout_fraction = " << fmt_real(t.holdout_fraction) << "\n";
  out << "# data\n";
  out << "dataset = " << cfg.dataset << "\n";
  out << "dataset_n = " << cfg.dataset_n << "\n";
  out << "out_dir = " << cfg.out_dir << "\n";
  return out.str();
}

void save_checkpoint(const std::string& path, const CheckpointMeta& meta,
                     const FlowModel& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open checkpoint for writing: " + path);

  RunConfig echo;
  echo.model = meta.model;
  echo.train.bit_depth = meta.bit_depth;
  echo.train.seed = meta.model.init_seed;
  echo.train.beta = meta.model.beta;
  echo.train.ablation = meta.model.ablation;
  const std::string header = serialize_run_config(echo);

  out.write("FLOWDET1", 8);
  const std::uint64_t len = header.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  for (Index i = 0; i < model.layer_count(); ++i) {
    const Vector& p = model.layer(i).params();
    out.write(reinterpret_cast<const char*>(p.data()),
              static_cast<std::streamsize>(p.size() * sizeof(Real)));
  }
  if (!out) throw Error("short write on checkpoint: " + path);
}

std::pair<CheckpointMeta, FlowModel> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, "FLOWDET1", 8) != 0)
    throw Error("bad checkpoint magic: " + path);
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || len > (1u << 20)) throw Error("bad checkpoint header length");
  std::string header(len, '\0');
  in.read(header.data(), static_cast<std::streamsize>(len));
  if (!in) throw Error("truncated checkpoint header");

  const RunConfig echo = parse_run_config(header);
  CheckpointMeta meta;
  meta.model = echo.model;
  meta.bit_depth = echo.train.bit_depth;

  FlowModel model = build_model(meta.model);
  for (Index i = 0; i < model.layer_count(); ++i) {
    Vector& p = model.layer(i).params();
    in.read(reinterpret_cast<char*>(p.data()),
            static_cast<std::streamsize>(p.size() * sizeof(Real)));
    if (!in) throw Error("truncated checkpoint parameter block");
    require_finite(p, "checkpoint parameters");
  }
  in.peek();
  if (!in.eof()) throw Error("trailing bytes after checkpoint parameters");
  return {meta, std::move(model)};
}

Matrix read_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open data file: " + path);
  std::vector<std::vector<Real>> rows;
  std::string line;
  while (std::getline(in, line)) {
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    std::vector<Real> row;
    std::istringstream ls(stripped);
    std::string cell;
    while (std::getline(ls, cell, ',')) row.push_back(parse_real(trim(cell), 0));
    if (!rows.empty() && rows.front().size() != row.size())
      throw Error("ragged CSV rows in " + path);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw Error("empty CSV: " + path);
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(rows[0].size()));
  for (Index i = 0; i < out.rows(); ++i)
    for (Index j = 0; j < out.cols(); ++j) out(i, j) = rows[i][j];
  require_finite(out, "csv data");
  return out;
}

void write_csv_matrix(const std::string& path, MatrixRef rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  for (Index i = 0; i < rows.rows(); ++i) {
    for (Index j = 0; j < rows.cols(); ++j) {
      if (j) out << ',';
      out << fmt_real(rows(i, j));
    }
    out << '\n';
  }
}

ImageData read_images(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image file: " + path);
  std::uint16_t hdr[4];
  in.read(reinterpret_cast<char*>(hdr), 8);
  if (!in) throw Error("truncated image header: " + path);
  ImageData data;
  data.h = hdr[0];
  data.w = hdr[1];
  data.c = hdr[2];
  data.bits = hdr[3];
  require(data.h > 0 && data.w > 0 && data.c > 0, "image header: zero dims");
  require(data.bits >= 1 && data.bits <= 8, "image header: bit depth in [1,8]");

  const Index px = data.h * data.w * data.c;
  std::vector<unsigned char> buf(px);
  std::vector<std::vector<unsigned char>> images;
  while (in.read(reinterpret_cast<char*>(buf.data()), px)) images.push_back(buf);
  if (in.gcount() != 0) throw Error("trailing partial image in " + path);
  require(!images.empty(), "image file holds no images");

  const Real levels = static_cast<Real>(Index{1} << data.bits);
  data.rows.resize(static_cast<Index>(images.size()), px);
  for (Index i = 0; i < data.rows.rows(); ++i)
    for (Index j = 0; j < px; ++j) {
      const Real v = images[i][j];
      if (v >= levels) throw Error("pixel exceeds the declared bit depth");
      data.rows(i, j) = v;
    }
  return data;
}

void write_images(const std::string& path, const ImageData& data) {
  require(data.rows.cols() == data.h * data.w * data.c, "image shape mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  const std::uint16_t hdr[4] = {static_cast<std::uint16_t>(data.h),
                                static_cast<std::uint16_t>(data.w),
                                static_cast<std::uint16_t>(data.c),
                                static_cast<std::uint16_t>(data.bits)};
  out.write(reinterpret_cast<const char*>(hdr), 8);
  const Real levels = static_cast<Real>(Index{1} << data.bits);
  for (Index i = 0; i < data.rows.rows(); ++i)
    for (Index j = 0; j < data.rows.cols(); ++j) {
      const Real v = data.rows(i, j);
      require(v >= 0 && v < levels && v == std::floor(v),
              "image write: values must be integers below 2^bits");
      const unsigned char byte = static_cast<unsigned char>(v);
      out.write(reinterpret_cast<const char*>(&byte), 1);
    }
}

void write_ppm(const std::string& path, MatrixRef grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  out << "P6\n" << grid.cols() << " " << grid.rows() << "\n255\n";
  const Real mx = grid.maxCoeff();
  const Real scale = mx > 0 ? 255.0 / mx : 0.0;
  for (Index i = 0; i < grid.rows(); ++i)
    for (Index j = 0; j < grid.cols(); ++j) {
      const Real v = std::clamp(grid(i, j) * scale, 0.0, 255.0);
      const unsigned char byte = static_cast<unsigned char>(std::lround(v));
      const unsigned char px[3] = {byte, byte, byte};
      out.write(reinterpret_cast<const char*>(px), 3);
    }
}

void write_trace_csv(const std::string& path, const TrainTrace& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  const Index nlayers = trace.layer_count();
  out << "nll_nats,nll_bpd";
  for (Index l = 0; l < nlayers; ++l)
    out << ",logdet_" << l << ",var_" << l << ",gradnorm_" << l;
  out << '\n';
  for (const StepRecord& rec : trace.steps) {
    out << fmt_real(rec.nll_nats) << ',' << fmt_real(rec.nll_bpd);
    for (Index l = 0; l < nlayers; ++l)
      out << ',' << fmt_real(rec.logdet[l]) << ',' << fmt_real(rec.var[l]) << ','
          << fmt_real(rec.gradnorm[l]);
    out << '\n';
  }
}

TrainTrace read_trace_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open trace file: " + path);
  std::string header;
  if (!std::getline(in, header)) throw EmptyTrace("trace file has no header");
  Index nlayers = 0;
  {
    std::istringstream hs(header);
    std::string col;
    while (std::getline(hs, col, ','))
      if (col.rfind("logdet_", 0) == 0) ++nlayers;
  }
  TrainTrace trace;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::istringstream ls(line);
    std::string cell;
    std::vector<Real> vals;
    while (std::getline(ls, cell, ','))
      vals.push_back(std::stod(cell));  // traces may hold nan/inf rows
    if (static_cast<Index>(vals.size()) != 2 + 3 * nlayers)
      throw Error("trace row width mismatch in " + path);
    StepRecord rec;
    rec.nll_nats = vals[0];
    rec.nll_bpd = vals[1];
    rec.logdet.resize(nlayers);
    rec.var.resize(nlayers);
    rec.gradnorm.resize(nlayers);
    for (Index l = 0; l < nlayers; ++l) {
      rec.logdet[l] = vals[2 + 3 * l];
      rec.var[l] = vals[3 + 3 * l];
      rec.gradnorm[l] = vals[4 + 3 * l];
    }
    trace.steps.push_back(std::move(rec));
  }
  return trace;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open for writing: " + path);
  out << text;
}

Matrix load_dataset(const std::string& spec, Index n, std::uint64_t seed,
                    Index* bits_out) {
  if (bits_out) *bits_out = 0;
  const std::filesystem::path p(spec);
  if (p.extension() == ".csv") return read_csv_matrix(spec);
  if (p.extension() == ".img") {
    const ImageData data = read_images(spec);
    if (bits_out) *bits_out = data.bits;
    return dequantize_rows(data.rows, data.bits, seed ^ 0xd1b54a32d192ed03ull);
  }
  return toy_dataset(spec, n, seed);
}

}  // namespace flowdet::io
