#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "probsafe/cde_field.hpp"

namespace probsafe {

namespace {

constexpr const char* kMagic = "probsafe-field";

std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
  return std::string(buf, res.ptr);
}

std::string axis_line(const Axis& a) {
  return fmt(a.min) + " " + fmt(a.max) + " " + std::to_string(a.nodes);
}

Axis parse_axis(const std::string& s, const std::filesystem::path& path) {
  std::istringstream is(s);
  Axis a;
  if (!(is >> a.min >> a.max >> a.nodes))
    throw std::runtime_error(path.string() + ": malformed axis '" + s + "'");
  return a;
}

std::uint64_t swap_if_big(std::uint64_t v) {
  if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
  return v;
}

}  // namespace

void write_field(const SafeProbabilityField& field, const std::filesystem::path& path,
                 bool binary) {
  if (field.values.size() != field.grid.size())
    throw std::invalid_argument("field value count does not match its grid");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << kMagic << ": 1\n";
  os << "ptype: " << to_string(field.ptype) << "\n";
  os << "policy_tag: " << to_string(field.policy_tag) << "\n";
  os << "provenance: " << to_string(field.provenance) << "\n";
  os << "margin: " << fmt(field.margin) << "\n";
  os << "axis.T: " << axis_line(field.grid.T) << "\n";
  for (std::size_t i = 0; i < field.grid.x.size(); ++i)
    os << "axis.x" << (i + 1) << ": " << axis_line(field.grid.x[i]) << "\n";
  if (field.grid.L) os << "axis.L: " << axis_line(*field.grid.L) << "\n";
  os << "order: row-major T";
  for (std::size_t i = 0; i < field.grid.x.size(); ++i) os << " x" << (i + 1);
  if (field.grid.L) os << " L";
  os << "\n";
  os << "count: " << field.values.size() << "\n";
  os << "encoding: " << (binary ? "f64le" : "text") << "\n";
  os << "---\n";
  if (binary) {
    for (double v : field.values) {
      const std::uint64_t bits = swap_if_big(std::bit_cast<std::uint64_t>(v));
      os.write(reinterpret_cast<const char*>(&bits), sizeof bits);
    }
  } else {
    for (double v : field.values) os << fmt(v) << "\n";
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

SafeProbabilityField read_field(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open field file " + path.string());
  std::map<std::string, std::string> header;
  std::string line;
  bool ended = false;
  while (std::getline(is, line)) {
    if (line == "---") {
      ended = true;
      break;
    }
    const auto colon = line.find(": ");
    if (colon == std::string::npos)
      throw std::runtime_error(path.string() + ": malformed header line '" + line + "'");
    header[line.substr(0, colon)] = line.substr(colon + 2);
  }
  if (!ended || header[kMagic] != "1")
    throw std::runtime_error(path.string() + " is not a probsafe field file");

  SafeProbabilityField f;
  f.ptype = parse_probability_type(header.at("ptype"));
  f.policy_tag = parse_policy_tag(header.at("policy_tag"));
  f.provenance = parse_provenance(header.at("provenance"));
  f.margin = std::stod(header.at("margin"));
  f.grid.T = parse_axis(header.at("axis.T"), path);
  for (std::size_t i = 1; header.count("axis.x" + std::to_string(i)); ++i)
    f.grid.x.push_back(parse_axis(header["axis.x" + std::to_string(i)], path));
  if (header.count("axis.L")) f.grid.L = parse_axis(header["axis.L"], path);
  f.grid.validate();
  const std::size_t count = std::stoull(header.at("count"));
  if (count != f.grid.size())
    throw std::runtime_error(path.string() + ": value count does not match the grid axes");
  f.values.resize(count);
  const std::string enc = header.at("encoding");
  if (enc == "f64le") {
    for (double& v : f.values) {
      std::uint64_t bits;
      if (!is.read(reinterpret_cast<char*>(&bits), sizeof bits))
        throw std::runtime_error(path.string() + ": truncated value block");
      v = std::bit_cast<double>(swap_if_big(bits));
    }
  } else if (enc == "text") {
    for (double& v : f.values)
      if (!(is >> v)) throw std::runtime_error(path.string() + ": truncated value block");
  } else {
    throw std::runtime_error(path.string() + ": unknown encoding '" + enc + "'");
  }
  return f;
}

void write_field_csv(const SafeProbabilityField& field, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  const GridSpec& g = field.grid;
  os << "T";
  for (std::size_t i = 0; i < g.x.size(); ++i) os << ",x" << (i + 1);
  if (g.L) os << ",L";
  os << ",value\n";
  const auto shape = g.shape();
  const auto strides = g.strides();
  char buf[32];
  for (std::size_t flat = 0; flat < field.values.size(); ++flat) {
    for (std::size_t d = 0; d < shape.size(); ++d) {
      const std::size_t i = (flat / strides[d]) % shape[d];
      std::snprintf(buf, sizeof buf, "%.10g", g.axis(d).coord(i));
      os << (d ? "," : "") << buf;
    }
    std::snprintf(buf, sizeof buf, "%.10g", field.values[flat]);
    os << "," << buf << "\n";
  }
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace probsafe
