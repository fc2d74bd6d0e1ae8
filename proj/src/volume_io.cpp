#include "lowreg/volume_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "lowreg/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "VOL1 payloads are little-endian; this build targets LE hosts");

namespace lowreg {

namespace {

struct Vol1Header {
  Dims dims;
  std::array<float, 3> spacing{1.0f, 1.0f, 1.0f};
  std::string dtype;
  int channels = 1;
};

std::string format_header(const Vol1Header& h) {
  std::ostringstream os;
  os << "magic VOL1\n";
  os << "dims " << h.dims.nx << ' ' << h.dims.ny << ' ' << h.dims.nz << '\n';
  char buf[96];
  std::snprintf(buf, sizeof(buf), "spacing %.9g %.9g %.9g\n", h.spacing[0],
                h.spacing[1], h.spacing[2]);
  os << buf;
  os << "dtype " << h.dtype << '\n';
  os << "order x-fastest\n";
  if (h.channels != 1)
    os << "channels " << h.channels << '\n';
  os << '\n';
  return os.str();
}

Vol1Header parse_header(std::istream& in, const std::filesystem::path& path) {
  Vol1Header h;
  std::string line;
  bool have_magic = false, have_dims = false, have_dtype = false,
       have_order = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      break;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "magic") {
      std::string magic;
      ls >> magic;
      if (magic != "VOL1")
        throw IoError(path.string() + ": bad magic '" + magic + "'");
      have_magic = true;
    } else if (key == "dims") {
      if (!(ls >> h.dims.nx >> h.dims.ny >> h.dims.nz) || h.dims.nx < 1 ||
          h.dims.ny < 1 || h.dims.nz < 1)
        throw IoError(path.string() + ": bad dims line");
      have_dims = true;
    } else if (key == "spacing") {
      if (!(ls >> h.spacing[0] >> h.spacing[1] >> h.spacing[2]))
        throw IoError(path.string() + ": bad spacing line");
    } else if (key == "dtype") {
      ls >> h.dtype;
      if (h.dtype != "f32" && h.dtype != "u8")
        throw IoError(path.string() + ": unsupported dtype '" + h.dtype + "'");
      have_dtype = true;
    } else if (key == "order") {
      std::string order;
      ls >> order;
      if (order != "x-fastest")
        throw IoError(path.string() + ": unsupported order '" + order + "'");
      have_order = true;
    } else if (key == "channels") {
      if (!(ls >> h.channels) || (h.channels != 1 && h.channels != 3))
        throw IoError(path.string() + ": bad channels line");
    } else {
      throw IoError(path.string() + ": unknown header key '" + key + "'");
    }
  }
  if (!have_magic || !have_dims || !have_dtype || !have_order)
    throw IoError(path.string() + ": incomplete VOL1 header");
  if (h.dims.voxel_count() > (static_cast<std::size_t>(1) << 31))
    throw IoError(path.string() + ": dims too large");
  return h;
}

void write_vol1(const std::filesystem::path& path, const Vol1Header& h,
                const void* payload, std::size_t payload_bytes) {
  std::string bytes = format_header(h);
  const std::size_t header_len = bytes.size();
  bytes.resize(header_len + payload_bytes);
  std::memcpy(bytes.data() + header_len, payload, payload_bytes);
  atomic_write_file(path, bytes);
}

std::vector<char> read_payload(std::istream& in,
                               const std::filesystem::path& path,
                               std::size_t expected_bytes) {
  std::vector<char> buf(expected_bytes);
  in.read(buf.data(), static_cast<std::streamsize>(expected_bytes));
  if (static_cast<std::size_t>(in.gcount()) != expected_bytes)
    throw IoError(path.string() + ": truncated payload");
  char extra;
  if (in.read(&extra, 1), in.gcount() != 0)
    throw IoError(path.string() + ": trailing bytes after payload");
  return buf;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError(path.string() + ": cannot open for reading");
  return in;
}

} // namespace

void atomic_write_file(const std::filesystem::path& path,
                       const std::string& bytes) {
  std::filesystem::path dir = path.parent_path();
  if (!dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec)
      throw IoError(dir.string() + ": cannot create directory: " + ec.message());
  }
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw IoError(tmp.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out)
      throw IoError(tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec)
    throw IoError(path.string() + ": atomic rename failed: " + ec.message());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_volume(const std::filesystem::path& path, const Volume& v) {
  if (v.data.size() != v.dims.voxel_count())
    throw std::invalid_argument("write_volume: size mismatch");
  Vol1Header h{v.dims, v.spacing, "f32", 1};
  write_vol1(path, h, v.data.data(), v.data.size() * sizeof(float));
}

Volume read_volume(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  const Vol1Header h = parse_header(in, path);
  if (h.dtype != "f32" || h.channels != 1)
    throw IoError(path.string() + ": expected a scalar f32 volume");
  Volume v;
  v.dims = h.dims;
  v.spacing = h.spacing;
  const std::size_t n = h.dims.voxel_count();
  const std::vector<char> buf = read_payload(in, path, n * sizeof(float));
  v.data.resize(n);
  std::memcpy(v.data.data(), buf.data(), buf.size());
  return v;
}

void write_labels(const std::filesystem::path& path, const LabelMap& l) {
  if (l.data.size() != l.dims.voxel_count())
    throw std::invalid_argument("write_labels: size mismatch");
  Vol1Header h{l.dims, {1.0f, 1.0f, 1.0f}, "u8", 1};
  write_vol1(path, h, l.data.data(), l.data.size());
}

LabelMap read_labels(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  const Vol1Header h = parse_header(in, path);
  if (h.dtype != "u8" || h.channels != 1)
    throw IoError(path.string() + ": expected a u8 label map");
  LabelMap l;
  l.dims = h.dims;
  const std::size_t n = h.dims.voxel_count();
  const std::vector<char> buf = read_payload(in, path, n);
  l.data.resize(n);
  std::memcpy(l.data.data(), buf.data(), buf.size());
  return l;
}

void write_ddf(const std::filesystem::path& path, const Ddf& d) {
  const std::size_t n = d.voxel_count();
  if (d.dx.size() != n || d.dy.size() != n || d.dz.size() != n)
    throw std::invalid_argument("write_ddf: size mismatch");
  std::vector<float> interleaved(3 * n);
  for (std::size_t i = 0; i < n; ++i) {
    interleaved[3 * i] = d.dx[i];
    interleaved[3 * i + 1] = d.dy[i];
    interleaved[3 * i + 2] = d.dz[i];
  }
  Vol1Header h{d.dims, {1.0f, 1.0f, 1.0f}, "f32", 3};
  write_vol1(path, h, interleaved.data(), interleaved.size() * sizeof(float));
}

Ddf read_ddf(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  const Vol1Header h = parse_header(in, path);
  if (h.dtype != "f32" || h.channels != 3)
    throw IoError(path.string() + ": expected an f32 channels-3 field");
  Ddf d(h.dims);
  const std::size_t n = h.dims.voxel_count();
  const std::vector<char> buf = read_payload(in, path, 3 * n * sizeof(float));
  std::vector<float> interleaved(3 * n);
  std::memcpy(interleaved.data(), buf.data(), buf.size());
  for (std::size_t i = 0; i < n; ++i) {
    d.dx[i] = interleaved[3 * i];
    d.dy[i] = interleaved[3 * i + 1];
    d.dz[i] = interleaved[3 * i + 2];
  }
  return d;
}

std::string csv_escape(const std::string& field) {
  const bool needs_quotes =
      field.find_first_of(",\"\r\n") != std::string::npos;
  if (!needs_quotes)
    return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"')
      out += '"';
    out += c;
  }
  out += '"';
  return out;
}

void write_csv(const std::filesystem::path& path,
               const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ostringstream os;
  auto emit_row = [&os](const std::vector<std::string>& row) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i)
        os << ',';
      os << csv_escape(row[i]);
    }
    os << '\n';
  };
  emit_row(header);
  for (const auto& row : rows) {
    if (row.size() != header.size())
      throw std::invalid_argument("write_csv: row width differs from header");
    emit_row(row);
  }
  atomic_write_file(path, os.str());
}

} // namespace lowreg
