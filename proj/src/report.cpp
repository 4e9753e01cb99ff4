#include <algorithm>
#include <cctype>
#include <optional>
#include <tuple>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "probsafe/experiment.hpp"

namespace probsafe {

namespace {

std::string num(double v, const char* f = "%.10g") {
  char buf[40];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw std::runtime_error("write failed for " + path.string());
}

struct Line {
  std::string name;
  const std::vector<double>* t;
  const std::vector<double>* y;
  const std::vector<double>* band = nullptr;  // +- half width
};

constexpr const char* kColors[] = {"#1b6ac9", "#d1495b", "#edae49", "#00798c",
                                   "#6a4c93", "#3d3d3d", "#8cb369", "#f28e2b"};

std::string svg_plot(const std::string& title, const std::string& ylabel,
                     const std::vector<Line>& lines, std::optional<std::pair<double, double>> yfix) {
  const double W = 720, H = 420, ml = 70, mr = 150, mt = 40, mb = 50;
  double t0 = 0, t1 = 1, y0 = 0, y1 = 1;
  bool first = true;
  for (const auto& l : lines)
    for (std::size_t k = 0; k < l.t->size(); ++k) {
      const double b = l.band ? (*l.band)[k] : 0.0;
      const double t = (*l.t)[k], lo = (*l.y)[k] - b, hi = (*l.y)[k] + b;
      if (first) {
        t0 = t1 = t;
        y0 = lo;
        y1 = hi;
        first = false;
      }
      t0 = std::min(t0, t);
      t1 = std::max(t1, t);
      y0 = std::min(y0, lo);
      y1 = std::max(y1, hi);
    }
  if (yfix) std::tie(y0, y1) = *yfix;
  if (t1 <= t0) t1 = t0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  const double pw = W - ml - mr, ph = H - mt - mb;
  auto X = [&](double t) { return ml + (t - t0) / (t1 - t0) * pw; };
  auto Y = [&](double y) { return mt + (1.0 - (std::clamp(y, y0, y1) - y0) / (y1 - y0)) * ph; };

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
     << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << ml << "\" y=\"22\" font-size=\"15\">" << title << "</text>\n";
  for (int i = 0; i <= 5; ++i) {
    const double yv = y0 + (y1 - y0) * i / 5.0, tv = t0 + (t1 - t0) * i / 5.0;
    os << "<line x1=\"" << ml << "\" x2=\"" << ml + pw << "\" y1=\"" << num(Y(yv), "%.2f")
       << "\" y2=\"" << num(Y(yv), "%.2f") << "\" stroke=\"#ddd\"/>\n";
    os << "<text x=\"" << ml - 6 << "\" y=\"" << num(Y(yv) + 4, "%.2f")
       << "\" text-anchor=\"end\">" << num(yv, "%.3g") << "</text>\n";
    os << "<text x=\"" << num(X(tv), "%.2f") << "\" y=\"" << mt + ph + 18
       << "\" text-anchor=\"middle\">" << num(tv, "%.3g") << "</text>\n";
  }
  os << "<rect x=\"" << ml << "\" y=\"" << mt << "\" width=\"" << pw << "\" height=\"" << ph
     << "\" fill=\"none\" stroke=\"#333\"/>\n";
  os << "<text x=\"" << ml + pw / 2 << "\" y=\"" << H - 10 << "\" text-anchor=\"middle\">t [s]</text>\n";
  os << "<text transform=\"translate(16," << mt + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">"
     << ylabel << "</text>\n";
  for (std::size_t li = 0; li < lines.size(); ++li) {
    const auto& l = lines[li];
    const char* col = kColors[li % std::size(kColors)];
    if (l.band) {
      os << "<polygon fill=\"" << col << "\" fill-opacity=\"0.15\" stroke=\"none\" points=\"";
      for (std::size_t k = 0; k < l.t->size(); ++k)
        os << num(X((*l.t)[k]), "%.2f") << "," << num(Y((*l.y)[k] + (*l.band)[k]), "%.2f") << " ";
      for (std::size_t k = l.t->size(); k-- > 0;)
        os << num(X((*l.t)[k]), "%.2f") << "," << num(Y((*l.y)[k] - (*l.band)[k]), "%.2f") << " ";
      os << "\"/>\n";
    }
    os << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.6\" points=\"";
    for (std::size_t k = 0; k < l.t->size(); ++k)
      os << num(X((*l.t)[k]), "%.2f") << "," << num(Y((*l.y)[k]), "%.2f") << " ";
    os << "\"/>\n";
    const double ly = mt + 14 + 18.0 * static_cast<double>(li);
    os << "<line x1=\"" << ml + pw + 12 << "\" x2=\"" << ml + pw + 32 << "\" y1=\"" << ly
       << "\" y2=\"" << ly << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
    os << "<text x=\"" << ml + pw + 38 << "\" y=\"" << ly + 4 << "\">" << l.name << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

std::string safe_name(const std::string& s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-') ? c : '_';
  return out;
}

}  // namespace

std::string timeseries_csv(const ExperimentReport& report) {
  std::ostringstream os;
  os << "t,controller,mean_state,std_state,expected_safe_prob,empirical_safe_prob,fallback_count\n";
  for (const auto& s : report.series)
    for (std::size_t k = 0; k < s.t.size(); ++k)
      os << num(s.t[k], "%.6f") << "," << s.controller << "," << num(s.mean_state[k]) << ","
         << num(s.std_state[k]) << "," << num(s.expected_safe_prob[k]) << ","
         << num(s.empirical_safe_prob[k]) << "," << s.fallback_count[k] << "\n";
  return os.str();
}

void emit_outputs(const ExperimentReport& report, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir.string() + ": " + ec.message());
  write_text(dir / "timeseries.csv", timeseries_csv(report));

  std::ostringstream sum;
  sum << "controller,mean_expected_safe_prob,std_error,min_expected_safe_prob,"
         "terminal_empirical_safe_prob,fallback_rate,out_of_domain_queries\n";
  const auto stats = ordering_stats(report);
  for (std::size_t i = 0; i < stats.size(); ++i)
    sum << stats[i].controller << "," << num(stats[i].mean_expected_safe_prob) << ","
        << num(stats[i].std_error) << "," << num(stats[i].min_expected_safe_prob) << ","
        << num(stats[i].terminal_empirical_safe_prob) << ","
        << num(report.series[i].fallback_rate()) << ","
        << report.series[i].out_of_domain_queries << "\n";
  write_text(dir / "summary.csv", sum.str());

  std::ostringstream meta;
  meta << "seed: " << report.seed << "\n";
  meta << "field_provenance: " << report.field_provenance << "\n";
  meta << "evaluation: " << report.evaluation << "\n";
  for (std::size_t i = 0; i < report.series.size(); ++i) {
    char h[24];
    std::snprintf(h, sizeof h, "%016llx", static_cast<unsigned long long>(report.config_hashes[i]));
    meta << "config_hash." << report.series[i].controller << ": " << h << "\n";
  }
  for (const auto& n : report.notes) meta << "note: " << n << "\n";
  write_text(dir / "metadata.txt", meta.str());

  if (report.configs.size() == 1) {
    write_text(dir / "config.resolved.toml", serialize_config(report.configs.front()));
  } else {
    for (std::size_t i = 0; i < report.configs.size(); ++i)
      write_text(dir / ("config.resolved." + safe_name(report.series[i].controller) + ".toml"),
                 serialize_config(report.configs[i]));
  }

  std::vector<Line> state, expected, empirical;
  for (const auto& s : report.series) {
    state.push_back({s.controller, &s.t, &s.mean_state, &s.std_state});
    expected.push_back({s.controller, &s.t, &s.expected_safe_prob});
    empirical.push_back({s.controller, &s.t, &s.empirical_safe_prob});
  }
  write_text(dir / "mean_state.svg", svg_plot("Mean state (band: +-1 std)", "x", state, std::nullopt));
  write_text(dir / "expected_safe_prob.svg",
             svg_plot("Expected safe probability", "E[F(Z_t)]", expected, std::pair{0.0, 1.0}));
  write_text(dir / "empirical_safe_prob.svg",
             svg_plot("Empirical safe probability", "fraction safe", empirical, std::pair{0.0, 1.0}));
}

}  // namespace probsafe
