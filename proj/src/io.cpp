#include "so3diff/io.hpp"

#include <zlib.h>

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

namespace so3diff::io {

namespace {

constexpr char kSampleMagic[8] = {'S', 'O', '3', 'S', 'M', 'P', 'L', '\0'};
constexpr char kCheckpointMagic[8] = {'S', 'O', '3', 'C', 'K', 'P', 'T', '\0'};

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  template <typename T>
  void uint(T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u32(std::uint32_t v) { uint(v); }
  void u64(std::uint64_t v) { uint(v); }
  void i64(std::int64_t v) { uint(static_cast<std::uint64_t>(v)); }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t>& buffer() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::uint8_t* data, std::size_t size, std::string what) : d_(data), n_(size), what_(std::move(what)) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorCode::Format, what_ + ": " + msg + " at byte " + std::to_string(pos_));
  }
  void need(std::size_t k) const {
    if (n_ - pos_ < k) fail("unexpected end of data (need " + std::to_string(k) + " bytes)");
  }
  template <typename T>
  T uint() {
    need(sizeof(T));
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(d_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return v;
  }
  std::uint32_t u32() { return uint<std::uint32_t>(); }
  std::uint64_t u64() { return uint<std::uint64_t>(); }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t max_len) {
    const std::uint32_t len = u32();
    if (len > max_len) fail("string length " + std::to_string(len) + " exceeds limit");
    need(len);
    std::string s(reinterpret_cast<const char*>(d_ + pos_), len);
    pos_ += len;
    return s;
  }
  void magic(const char (&m)[8]) {
    need(8);
    if (std::memcmp(d_ + pos_, m, 8) != 0) fail("bad magic");
    pos_ += 8;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return n_ - pos_; }

 private:
  const std::uint8_t* d_;
  std::size_t n_;
  std::size_t pos_ = 0;
  std::string what_;
};

constexpr std::size_t kMaxText = 1u << 24;
constexpr std::uint32_t kMaxContextDim = 1u << 16;

std::uint32_t crc32_of(const std::uint8_t* p, std::size_t n) {
  uLong crc = crc32(0L, Z_NULL, 0);
  while (n > 0) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
    crc = crc32(crc, p, chunk);
    p += chunk;
    n -= chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

void write_net(Writer& w, const nn::NetParams<double>& p) {
  w.u32(static_cast<std::uint32_t>(p.widths.size()));
  for (int v : p.widths) w.u32(static_cast<std::uint32_t>(v));
  w.u32(static_cast<std::uint32_t>(p.activation));
  for (std::size_t l = 0; l < p.n_layers(); ++l) {
    const auto& m = p.weights[l];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) w.f64(m(r, c));
    }
    for (Eigen::Index r = 0; r < p.biases[l].size(); ++r) w.f64(p.biases[l](r));
  }
}

nn::NetParams<double> read_net(Reader& r) {
  const std::uint32_t n_widths = r.u32();
  if (n_widths < 2 || n_widths > 64) r.fail("implausible layer count");
  nn::NetParams<double> p;
  for (std::uint32_t i = 0; i < n_widths; ++i) {
    const std::uint32_t v = r.u32();
    if (v < 1 || v > (1u << 20)) r.fail("implausible layer width");
    p.widths.push_back(static_cast<int>(v));
  }
  const std::uint32_t act = r.u32();
  if (act != static_cast<std::uint32_t>(nn::Activation::LeakyRelu)) r.fail("unknown activation tag");
  p.activation = nn::Activation::LeakyRelu;
  for (std::size_t l = 0; l + 1 < p.widths.size(); ++l) {
    const int rows = p.widths[l + 1], cols = p.widths[l];
    r.need(8u * (static_cast<std::size_t>(rows) * cols + rows));
    nn::Matrix<double> m(rows, cols);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) m(i, j) = r.f64();
    }
    nn::Vector<double> b(rows);
    for (int i = 0; i < rows; ++i) b(i) = r.f64();
    p.weights.push_back(std::move(m));
    p.biases.push_back(std::move(b));
  }
  return p;
}

void write_adam(Writer& w, const nn::AdamState<double>& s) {
  w.i64(s.step);
  w.f64(s.lr);
  w.f64(s.beta1);
  w.f64(s.beta2);
  w.f64(s.epsilon);
  write_net(w, s.m);
  write_net(w, s.v);
}

nn::AdamState<double> read_adam(Reader& r, const nn::NetParams<double>& net) {
  nn::AdamState<double> s;
  s.step = r.i64();
  s.lr = r.f64();
  s.beta1 = r.f64();
  s.beta2 = r.f64();
  s.epsilon = r.f64();
  s.m = read_net(r);
  s.v = read_net(r);
  if (s.m.widths != net.widths || s.v.widths != net.widths) r.fail("optimiser state shape differs from its network");
  return s;
}

std::string with_offset(const std::string& what, std::size_t line) {
  return what + " (line " + std::to_string(line) + ")";
}

std::vector<double> parse_csv_row(const std::string& line, std::size_t line_no, std::size_t byte_offset,
                                  const std::string& file) {
  std::vector<double> out;
  std::size_t start = 0;
  while (start <= line.size()) {
    std::size_t end = line.find(',', start);
    if (end == std::string::npos) end = line.size();
    double v = 0.0;
    const char* b = line.data() + start;
    const char* e = line.data() + end;
    while (b < e && *b == ' ') ++b;
    const auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc() || res.ptr != e) {
      throw Error(ErrorCode::Format, with_offset(file + ": bad number at byte " + std::to_string(byte_offset + start), line_no));
    }
    out.push_back(v);
    start = end + 1;
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Format, "cannot open " + path.string());
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Format, "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(ErrorCode::Format, "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
  write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

// ---------------------------------------------------------------------------
// Sample files

std::vector<std::uint8_t> encode_samples(const SampleSet& s, const SampleProvenance& p) {
  s.validate();
  Writer w;
  w.bytes(kSampleMagic, 8);
  w.u32(kSampleFileVersion);
  w.u64(s.size());
  w.u32(static_cast<std::uint32_t>(s.context_dim()));
  w.u64(p.seed);
  w.u32(p.n_steps);
  w.str(p.meta);
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto& m = s.rotations[i].matrix();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 3; ++c) w.f64(m(r, c));
    }
    for (int k = 0; k < s.context_dim(); ++k) w.f64(s.contexts(k, static_cast<Eigen::Index>(i)));
  }
  return std::move(w.buffer());
}

SampleFile decode_samples(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes.data(), bytes.size(), "sample file");
  r.magic(kSampleMagic);
  const std::uint32_t version = r.u32();
  if (version != kSampleFileVersion) r.fail("unsupported sample file version " + std::to_string(version));
  const std::uint64_t count = r.u64();
  const std::uint32_t ctx = r.u32();
  if (ctx > kMaxContextDim) r.fail("implausible context dimension");
  SampleFile f;
  f.provenance.seed = r.u64();
  f.provenance.n_steps = r.u32();
  f.provenance.meta = r.str(kMaxText);
  const std::size_t row = 8u * (9u + ctx);
  if (count > r.remaining() / row || r.remaining() != count * row) {
    r.fail("payload size does not match count " + std::to_string(count));
  }
  f.samples.label = f.provenance.meta;
  f.samples.rotations.reserve(count);
  if (ctx > 0) f.samples.contexts.resize(ctx, static_cast<Eigen::Index>(count));
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::size_t at = r.pos();
    Matrix3<double> m;
    for (int a = 0; a < 3; ++a) {
      for (int b = 0; b < 3; ++b) m(a, b) = r.f64();
    }
    try {
      f.samples.rotations.push_back(Rotationd::from_matrix(m));
    } catch (const Error& e) {
      throw Error(ErrorCode::Format, "sample file: row " + std::to_string(i) + " is not a rotation at byte " +
                                         std::to_string(at) + " (" + e.what() + ")");
    }
    for (std::uint32_t k = 0; k < ctx; ++k) f.samples.contexts(k, static_cast<Eigen::Index>(i)) = r.f64();
  }
  return f;
}

void write_samples(const std::filesystem::path& path, const SampleSet& s, const SampleProvenance& p) {
  write_file_atomic(path, encode_samples(s, p));
}

SampleFile read_samples(const std::filesystem::path& path) { return decode_samples(read_file(path)); }

void write_samples_text(const std::filesystem::path& path, const SampleSet& s) {
  std::ostringstream out;
  out << "qa,qb,qc,qd";
  for (int k = 0; k < s.context_dim(); ++k) out << ",ctx" << k;
  out << '\n';
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto q = to_quaternion(s.rotations[i]);
    out << format_double(q.a) << ',' << format_double(q.b) << ',' << format_double(q.c) << ',' << format_double(q.d);
    for (int k = 0; k < s.context_dim(); ++k) out << ',' << format_double(s.contexts(k, static_cast<Eigen::Index>(i)));
    out << '\n';
  }
  write_text_atomic(path, out.str());
}

// ---------------------------------------------------------------------------
// Checkpoints

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  if (c.nets.size() != c.optim.size()) throw Error(ErrorCode::ShapeMismatch, "one optimiser state per network");
  Writer w;
  w.bytes(kCheckpointMagic, 8);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(c.kind));
  w.i64(c.step);
  w.str(c.meta.dump());
  w.u32(static_cast<std::uint32_t>(c.nets.size()));
  for (std::size_t i = 0; i < c.nets.size(); ++i) {
    write_net(w, c.nets[i]);
    write_adam(w, c.optim[i]);
  }
  auto& buf = w.buffer();
  const std::uint32_t crc = crc32_of(buf.data(), buf.size());
  w.u32(crc);
  return std::move(buf);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 12) throw Error(ErrorCode::Format, "checkpoint: file too short at byte " + std::to_string(bytes.size()));
  Reader r(bytes.data(), bytes.size() - 4, "checkpoint");
  r.magic(kCheckpointMagic);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::CheckpointVersionMismatch, "checkpoint version " + std::to_string(version) +
                                                          " is not supported (expected " +
                                                          std::to_string(kCheckpointVersion) + ")");
  }
  const std::size_t body = bytes.size() - 4;
  std::uint32_t stored = 0;
  for (int i = 0; i < 4; ++i) stored |= static_cast<std::uint32_t>(bytes[body + i]) << (8 * i);
  if (crc32_of(bytes.data(), body) != stored) {
    throw Error(ErrorCode::Format, "checkpoint: CRC mismatch over bytes 0.." + std::to_string(body));
  }
  Checkpoint c;
  const std::uint32_t kind = r.u32();
  if (kind != 1 && kind != 2) r.fail("unknown model kind " + std::to_string(kind));
  c.kind = static_cast<ModelKind>(kind);
  c.step = r.i64();
  const std::size_t meta_at = r.pos();
  const std::string meta = r.str(kMaxText);
  try {
    c.meta = nlohmann::json::parse(meta);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::Format, "checkpoint: bad metadata at byte " + std::to_string(meta_at) + ": " + e.what());
  }
  const std::uint32_t n_nets = r.u32();
  if (n_nets > 16) r.fail("implausible network count");
  for (std::uint32_t i = 0; i < n_nets; ++i) {
    c.nets.push_back(read_net(r));
    c.optim.push_back(read_adam(r, c.nets.back()));
  }
  if (r.remaining() != 0) r.fail("trailing bytes before CRC");
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  write_file_atomic(path, encode_checkpoint(c));
}

Checkpoint read_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_file(path)); }

Checkpoint to_checkpoint(const sgm::ScoreModel& m, const nn::AdamState<double>& adam, nlohmann::json extra) {
  Checkpoint c;
  c.kind = ModelKind::Sgm;
  c.step = adam.step;
  c.meta = extra.is_object() ? std::move(extra) : nlohmann::json::object();
  c.meta["T"] = m.schedule.T;
  c.meta["eps_min"] = m.schedule.eps_min;
  c.meta["sigma_eps"] = m.schedule.sigma_eps;
  c.meta["noise_draw"] = m.schedule.draw == sgm::NoiseDraw::LogUniform ? "log-uniform" : "half-normal";
  c.meta["context_dim"] = m.context_dim;
  c.nets = {m.net};
  c.optim = {adam};
  return c;
}

Checkpoint to_checkpoint(const ddpm::ReverseKernelModel& m, const ddpm::VpSchedule& schedule,
                         const ddpm::OptimState& opt, nlohmann::json extra) {
  Checkpoint c;
  c.kind = ModelKind::Ddpm;
  c.step = opt.step();
  c.meta = extra.is_object() ? std::move(extra) : nlohmann::json::object();
  c.meta["betas"] = schedule.betas;
  c.meta["head"] = m.head == ddpm::DeltaHead::SixD ? "sixd" : "axis-angle";
  c.meta["context_dim"] = m.context_dim;
  c.nets = {m.delta_net, m.eps_net};
  c.optim = {opt.delta, opt.eps};
  return c;
}

namespace {

template <typename T>
T meta_get(const Checkpoint& c, const char* key) {
  try {
    return c.meta.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw Error(ErrorCode::Format, std::string("checkpoint metadata lacks a valid '") + key + "'");
  }
}

}  // namespace

SgmRestored sgm_from_checkpoint(const Checkpoint& c) {
  if (c.kind != ModelKind::Sgm || c.nets.size() != 1) throw Error(ErrorCode::Format, "checkpoint does not hold an SGM");
  SgmRestored out;
  out.model.net = c.nets[0];
  out.model.schedule.T = meta_get<double>(c, "T");
  out.model.schedule.eps_min = meta_get<double>(c, "eps_min");
  out.model.schedule.sigma_eps = meta_get<double>(c, "sigma_eps");
  const auto draw = meta_get<std::string>(c, "noise_draw");
  if (draw != "log-uniform" && draw != "half-normal") throw Error(ErrorCode::Format, "unknown noise draw '" + draw + "'");
  out.model.schedule.draw = draw == "log-uniform" ? sgm::NoiseDraw::LogUniform : sgm::NoiseDraw::HalfNormal;
  out.model.context_dim = meta_get<int>(c, "context_dim");
  out.model.schedule.validate();
  if (out.model.net.input_dim() != out.model.feature_dim() || out.model.net.output_dim() != 3) {
    throw Error(ErrorCode::Format, "SGM network shape does not match its metadata");
  }
  out.adam = c.optim[0];
  return out;
}

DdpmRestored ddpm_from_checkpoint(const Checkpoint& c) {
  if (c.kind != ModelKind::Ddpm || c.nets.size() != 2) throw Error(ErrorCode::Format, "checkpoint does not hold a DDPM");
  DdpmRestored out;
  out.model.delta_net = c.nets[0];
  out.model.eps_net = c.nets[1];
  const auto head = meta_get<std::string>(c, "head");
  if (head != "sixd" && head != "axis-angle") throw Error(ErrorCode::Format, "unknown delta head '" + head + "'");
  out.model.head = head == "sixd" ? ddpm::DeltaHead::SixD : ddpm::DeltaHead::AxisAngle;
  out.model.context_dim = meta_get<int>(c, "context_dim");
  out.schedule.betas = meta_get<std::vector<double>>(c, "betas");
  out.schedule.validate();
  const auto& m = out.model;
  if (m.delta_net.input_dim() != m.feature_dim() || m.eps_net.input_dim() != m.feature_dim() ||
      m.delta_net.output_dim() != m.head_dim() || m.eps_net.output_dim() != 1) {
    throw Error(ErrorCode::Format, "DDPM network shapes do not match their metadata");
  }
  out.opt = {c.optim[0], c.optim[1]};
  return out;
}

// ---------------------------------------------------------------------------
// Point clouds

void write_point_cloud(const std::filesystem::path& path, const OrientedPointCloud& cloud) {
  cloud.validate();
  std::ostringstream out;
  out << "x,y,z,ex,ey,ez\n";
  for (std::size_t i = 0; i < cloud.positions.size(); ++i) {
    const auto& p = cloud.positions[i];
    const auto& e = cloud.axes[i];
    out << format_double(p.x()) << ',' << format_double(p.y()) << ',' << format_double(p.z()) << ','
        << format_double(e.x()) << ',' << format_double(e.y()) << ',' << format_double(e.z()) << '\n';
  }
  write_text_atomic(path, out.str());
}

OrientedPointCloud read_point_cloud(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const std::string text(bytes.begin(), bytes.end());
  const std::string file = "point cloud " + path.string();
  OrientedPointCloud cloud;
  std::size_t pos = 0, line_no = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_no;
    if (line_no == 1) {
      if (line != "x,y,z,ex,ey,ez") throw Error(ErrorCode::Format, file + ": expected header x,y,z,ex,ey,ez at byte 0");
    } else if (!line.empty()) {
      const auto v = parse_csv_row(line, line_no, pos, file);
      if (v.size() != 6) {
        throw Error(ErrorCode::Format, with_offset(file + ": expected 6 columns at byte " + std::to_string(pos), line_no));
      }
      cloud.positions.emplace_back(v[0], v[1], v[2]);
      cloud.axes.emplace_back(v[3], v[4], v[5]);
    }
    pos = end + 1;
  }
  cloud.validate();
  return cloud;
}

}  // namespace so3diff::io
