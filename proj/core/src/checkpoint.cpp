// Checkpoint file ("MSDK"): magic, version u16, length-prefixed config
// text, epoch u64, named tensors (name, dtype tag, rows, cols, row-major
// little-endian payload), RNG state blob, trailing FNV-1a64 checksum of
// everything before it.

#include <cstring>
#include <fstream>
#include <sstream>

#include "metasd/meta_distiller.hpp"

namespace metasd {

namespace {

constexpr char kMagic[4] = {'M', 'S', 'D', 'K'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kDtypeF64 = 0;
constexpr std::uint8_t kDtypeU8 = 1;

// Buffered writer that maintains a running checksum.
struct SummingWriter {
  std::ostringstream buf;

  template <typename T>
  void pod(const T& v) {
    buf.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const void* p, std::size_t n) {
    buf.write(static_cast<const char*>(p),
              static_cast<std::streamsize>(n));
  }
  void str(const std::string& s) {
    pod<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  void f64_tensor(const std::string& name, const MatrixRM& m) {
    str(name);
    pod(kDtypeF64);
    pod<std::uint64_t>(static_cast<std::uint64_t>(m.rows()));
    pod<std::uint64_t>(static_cast<std::uint64_t>(m.cols()));
    bytes(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  void u8_tensor(const std::string& name, const MatrixRM& bits) {
    str(name);
    pod(kDtypeU8);
    pod<std::uint64_t>(static_cast<std::uint64_t>(bits.rows()));
    pod<std::uint64_t>(static_cast<std::uint64_t>(bits.cols()));
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(bits.size()));
    const double* p = bits.data();
    for (std::size_t i = 0; i < raw.size(); ++i)
      raw[i] = p[i] != 0.0 ? 1 : 0;
    bytes(raw.data(), raw.size());
  }
};

struct Reader {
  std::string data;
  std::size_t pos = 0;

  template <typename T>
  T pod() {
    if (pos + sizeof(T) > data.size())
      throw IoError("corrupt checkpoint: truncated");
    T v;
    std::memcpy(&v, data.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string str() {
    auto n = pod<std::uint32_t>();
    if (pos + n > data.size())
      throw IoError("corrupt checkpoint: truncated");
    std::string s = data.substr(pos, n);
    pos += n;
    return s;
  }
  void raw(void* out, std::size_t n) {
    if (pos + n > data.size())
      throw IoError("corrupt checkpoint: truncated");
    std::memcpy(out, data.data() + pos, n);
    pos += n;
  }
};

MatrixRM read_tensor(Reader& r, const std::string& expect_name,
                     std::uint8_t expect_dtype) {
  std::string name = r.str();
  if (name != expect_name)
    throw IoError("corrupt checkpoint: expected tensor '" + expect_name +
                  "', found '" + name + "'");
  auto dtype = r.pod<std::uint8_t>();
  if (dtype != expect_dtype)
    throw IoError("corrupt checkpoint: dtype mismatch for " + name);
  auto rows = r.pod<std::uint64_t>();
  auto cols = r.pod<std::uint64_t>();
  MatrixRM m(static_cast<Eigen::Index>(rows),
             static_cast<Eigen::Index>(cols));
  if (dtype == kDtypeF64) {
    r.raw(m.data(), sizeof(double) * rows * cols);
  } else {
    std::vector<std::uint8_t> raw(rows * cols);
    r.raw(raw.data(), raw.size());
    double* p = m.data();
    for (std::size_t i = 0; i < raw.size(); ++i)
      p[i] = raw[i] ? 1.0 : 0.0;
  }
  return m;
}

} // namespace

void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint& ck) {
  SummingWriter w;
  w.bytes(kMagic, 4);
  w.pod(kVersion);
  w.str(config_to_text(ck.config));
  w.pod<std::uint64_t>(ck.epoch);
  w.pod<std::uint8_t>(ck.student_params.has_value() ? 1 : 0);

  const auto& tensors = ck.params.tensors;
  w.pod<std::uint32_t>(static_cast<std::uint32_t>(tensors.size()));
  for (const Tensor& t : tensors)
    w.f64_tensor("param:" + t.name, t.data);
  if (ck.student_params)
    for (const Tensor& t : ck.student_params->tensors)
      w.f64_tensor("student:" + t.name, t.data);
  for (std::size_t t = 0; t < tensors.size(); ++t)
    w.u8_tensor("mask:" + tensors[t].name, ck.mask.bits[t]);
  w.pod(ck.mask.gamma);
  w.pod<std::uint8_t>(ck.mask.scope == MaskScope::Global ? 0 : 1);
  w.pod<std::uint64_t>(ck.mask.refreshed_at);
  for (std::size_t t = 0; t < tensors.size(); ++t)
    w.f64_tensor("adagrad_s:" + tensors[t].name, ck.opt_state.student_acc[t]);
  for (std::size_t t = 0; t < tensors.size(); ++t)
    w.f64_tensor("adagrad_t:" + tensors[t].name, ck.opt_state.teacher_acc[t]);
  w.pod(ck.opt_state.epsilon);
  w.str(ck.rng_state);

  std::string payload = w.buf.str();
  const std::uint64_t checksum = fnv1a64(payload.data(), payload.size());

  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw IoError("cannot open for writing: " + path.string());
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  os.write(reinterpret_cast<const char*>(&checksum), sizeof(checksum));
  if (!os)
    throw IoError("write failure: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is)
    throw IoError("cannot open checkpoint: " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  Reader r;
  r.data = ss.str();

  if (r.data.size() < 4 + sizeof(std::uint64_t) ||
      std::memcmp(r.data.data(), kMagic, 4) != 0)
    throw IoError("not a checkpoint file: " + path.string());
  const std::size_t body = r.data.size() - sizeof(std::uint64_t);
  std::uint64_t stored;
  std::memcpy(&stored, r.data.data() + body, sizeof(stored));
  if (fnv1a64(r.data.data(), body) != stored)
    throw IoError("corrupt checkpoint: checksum mismatch");
  r.data.resize(body);
  r.pos = 4;

  if (r.pod<std::uint16_t>() != kVersion)
    throw IoError("unsupported checkpoint version");

  Checkpoint ck;
  ck.config = parse_config_text(r.str());
  ck.epoch = r.pod<std::uint64_t>();
  const bool has_student = r.pod<std::uint8_t>() != 0;

  auto tcount = r.pod<std::uint32_t>();
  // Shapes come from the stored tensors themselves; counts are recovered
  // from the entity/relation tensor dimensions.
  ck.params.backbone = ck.config.backbone;
  ck.params.dim = ck.config.dim;
  ck.params.tensors.clear();

  // Template store names for this backbone.
  ParamStore shape = init_params(ck.config.backbone, ck.config.dim, 1, 1, 0,
                                 0.0);
  if (shape.tensors.size() != tcount)
    throw IoError("corrupt checkpoint: tensor count mismatch");
  for (const Tensor& t : shape.tensors) {
    Tensor out;
    out.name = t.name;
    out.data = read_tensor(r, "param:" + t.name, kDtypeF64);
    ck.params.tensors.push_back(std::move(out));
  }
  ck.params.entity_count =
      ck.params.tensors[ck.params.head_entity_tensor()].rows();
  ck.params.relation_count =
      ck.params.tensors[ck.params.relation_tensor()].rows() / 2;

  if (has_student) {
    ParamStore st = ck.params;
    for (Tensor& t : st.tensors)
      t.data = read_tensor(r, "student:" + t.name, kDtypeF64);
    ck.student_params = std::move(st);
  }

  for (const Tensor& t : ck.params.tensors)
    ck.mask.bits.push_back(read_tensor(r, "mask:" + t.name, kDtypeU8));
  ck.mask.gamma = r.pod<double>();
  ck.mask.scope = r.pod<std::uint8_t>() == 0 ? MaskScope::Global
                                             : MaskScope::PerTensor;
  ck.mask.refreshed_at = r.pod<std::uint64_t>();
  for (const Tensor& t : ck.params.tensors)
    ck.opt_state.student_acc.push_back(
        read_tensor(r, "adagrad_s:" + t.name, kDtypeF64));
  for (const Tensor& t : ck.params.tensors)
    ck.opt_state.teacher_acc.push_back(
        read_tensor(r, "adagrad_t:" + t.name, kDtypeF64));
  ck.opt_state.epsilon = r.pod<double>();
  ck.rng_state = r.str();
  return ck;
}

} // namespace metasd
