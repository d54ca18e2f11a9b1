#include "troughcal/report_export.hpp"

#include "troughcal/error.hpp"
#include "troughcal/grad_engine.hpp"
#include "troughcal/time_util.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace troughcal {

namespace fs = std::filesystem;

std::string safe_file_name(const std::string& id)
{
    std::string s = id;
    for (char& c : s) {
        if (c == ':' || c == '/' || c == '\\' || c == ' ') {
            c = '-';
        }
    }
    return s;
}

namespace {

class Writer {
public:
    explicit Writer(std::string dir) : dir_(std::move(dir)) {}

    void write(const std::string& name, const std::string& text)
    {
        const fs::path path = fs::path(dir_) / name;
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        std::ofstream os(path, std::ios::binary | std::ios::trunc);
        if (!os) {
            throw Error(ErrorKind::IoError, "cannot write " + path.string());
        }
        os << text;
        if (!os) {
            throw Error(ErrorKind::IoError, "failed writing " + path.string());
        }
        written_.push_back(path.string());
    }

    std::vector<std::string> take() { return std::move(written_); }

private:
    std::string dir_;
    std::vector<std::string> written_;
};

std::string num(double v)
{
    return format_double(v);
}

std::string fixed(double v, int digits = 2)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

/// Mean h_pg per (loop, span) over fitted periods.
std::map<std::pair<std::string, std::size_t>, double> hpg_means(const FitReport& report)
{
    std::map<std::pair<std::string, std::size_t>, std::pair<double, std::size_t>> acc;
    for (const auto& v : report.h_pg) {
        auto& a = acc[{v.loop_id, v.span}];
        a.first += v.value;
        ++a.second;
    }
    std::map<std::pair<std::string, std::size_t>, double> out;
    for (const auto& [k, a] : acc) {
        out[k] = a.first / static_cast<double>(a.second);
    }
    return out;
}

std::string svg_header(int w, int h)
{
    return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + std::to_string(w) + "\" height=\"" +
           std::to_string(h) + "\" viewBox=\"0 0 " + std::to_string(w) + " " + std::to_string(h) +
           "\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
}

std::string loss_svg(const std::vector<double>& curve)
{
    const int w = 640, h = 360, left = 60, right = 20, top = 30, bottom = 40;
    std::string s = svg_header(w, h);
    s += "<text x=\"" + std::to_string(w / 2) + "\" y=\"18\" text-anchor=\"middle\">Training loss (K^2, log scale)</text>\n";
    if (curve.empty()) {
        return s + "</svg>\n";
    }
    double lo = 1e300, hi = -1e300;
    for (double v : curve) {
        const double l = std::log10(std::max(v, 1e-300));
        lo = std::min(lo, l);
        hi = std::max(hi, l);
    }
    if (hi - lo < 1e-9) {
        hi = lo + 1.0;
    }
    const double pw = w - left - right, ph = h - top - bottom;
    auto px = [&](std::size_t i) {
        return left + (curve.size() > 1 ? pw * static_cast<double>(i) / static_cast<double>(curve.size() - 1) : 0.0);
    };
    auto py = [&](double v) { return top + ph * (hi - std::log10(std::max(v, 1e-300))) / (hi - lo); };
    s += "<rect x=\"" + std::to_string(left) + "\" y=\"" + std::to_string(top) + "\" width=\"" + fixed(pw, 0) +
         "\" height=\"" + fixed(ph, 0) + "\" fill=\"none\" stroke=\"#888\"/>\n";
    s += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < curve.size(); ++i) {
        s += fixed(px(i)) + "," + fixed(py(curve[i])) + " ";
    }
    s += "\"/>\n";
    s += "<text x=\"" + std::to_string(left - 5) + "\" y=\"" + std::to_string(top + 4) +
         "\" text-anchor=\"end\">1e" + fixed(hi, 1) + "</text>\n";
    s += "<text x=\"" + std::to_string(left - 5) + "\" y=\"" + fixed(top + ph) + "\" text-anchor=\"end\">1e" +
         fixed(lo, 1) + "</text>\n";
    s += "<text x=\"" + fixed(left + pw / 2) + "\" y=\"" + std::to_string(h - 10) +
         "\" text-anchor=\"middle\">epoch (0 to " + std::to_string(curve.size() - 1) + ")</text>\n";
    return s + "</svg>\n";
}

std::string beta_svg(const std::vector<BetaEntry>& beta)
{
    const int bar = 18, gap = 4, left = 120, top = 30;
    const int h = top + static_cast<int>(beta.size()) * (bar + gap) + 20;
    const int w = 640;
    std::string s = svg_header(w, h);
    s += "<text x=\"" + std::to_string(w / 2) + "\" y=\"18\" text-anchor=\"middle\">Mass-flow ratio per loop and era</text>\n";
    double hi = 0.0;
    for (const auto& e : beta) {
        hi = std::max(hi, e.beta);
    }
    if (hi <= 0.0) {
        hi = 1.0;
    }
    const double pw = w - left - 80;
    for (std::size_t i = 0; i < beta.size(); ++i) {
        const auto& e = beta[i];
        const int y = top + static_cast<int>(i) * (bar + gap);
        s += "<text x=\"" + std::to_string(left - 5) + "\" y=\"" + std::to_string(y + 13) + "\" text-anchor=\"end\">" +
             e.subfield_id + " era " + std::to_string(e.era) + " loop " + e.loop_id + "</text>\n";
        s += "<rect x=\"" + std::to_string(left) + "\" y=\"" + std::to_string(y) + "\" width=\"" +
             fixed(pw * e.beta / hi) + "\" height=\"" + std::to_string(bar) + "\" fill=\"#2ca02c\"/>\n";
        s += "<text x=\"" + fixed(left + pw * e.beta / hi + 4) + "\" y=\"" + std::to_string(y + 13) + "\">" +
             fixed(e.beta, 4) + "</text>\n";
    }
    return s + "</svg>\n";
}

std::string hpg_svg(const FitReport& report, const FieldModel& field)
{
    const auto means = hpg_means(report);
    std::size_t n_spans = 1;
    std::vector<std::string> loops;
    for (const auto& id : field.topology.loop_ids()) {
        bool any = false;
        for (const auto& [k, v] : means) {
            if (k.first == id) {
                any = true;
                n_spans = std::max(n_spans, k.second + 1);
            }
        }
        if (any) {
            loops.push_back(id);
        }
    }
    double lo = 1e300, hi = -1e300;
    for (const auto& [k, v] : means) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (!(hi > lo)) {
        hi = lo + 1.0;
    }
    const int cell_w = 70, cell_h = 20, left = 80, top = 50;
    const int w = left + static_cast<int>(n_spans) * cell_w + 20;
    const int h = top + static_cast<int>(loops.size()) * cell_h + 20;
    std::string s = svg_header(w, h);
    s += "<text x=\"" + std::to_string(w / 2) + "\" y=\"18\" text-anchor=\"middle\">h_pg per span (W/m^2K)</text>\n";
    for (std::size_t k = 0; k < n_spans; ++k) {
        s += "<text x=\"" + std::to_string(left + static_cast<int>(k) * cell_w + cell_w / 2) + "\" y=\"" +
             std::to_string(top - 6) + "\" text-anchor=\"middle\">span " + std::to_string(k + 1) + "</text>\n";
    }
    for (std::size_t r = 0; r < loops.size(); ++r) {
        const int y = top + static_cast<int>(r) * cell_h;
        s += "<text x=\"" + std::to_string(left - 5) + "\" y=\"" + std::to_string(y + 14) +
             "\" text-anchor=\"end\">loop " + loops[r] + "</text>\n";
        for (std::size_t k = 0; k < n_spans; ++k) {
            auto it = means.find({loops[r], k});
            if (it == means.end()) {
                continue;
            }
            const double f = (it->second - lo) / (hi - lo);
            const int red = 255;
            const int other = static_cast<int>(std::lround(255.0 * (1.0 - f)));
            char color[16];
            std::snprintf(color, sizeof color, "#%02x%02x%02x", red, other, other);
            const int x = left + static_cast<int>(k) * cell_w;
            s += "<rect x=\"" + std::to_string(x) + "\" y=\"" + std::to_string(y) + "\" width=\"" +
                 std::to_string(cell_w - 2) + "\" height=\"" + std::to_string(cell_h - 2) + "\" fill=\"" + color +
                 "\"/>\n";
            s += "<text x=\"" + std::to_string(x + cell_w / 2) + "\" y=\"" + std::to_string(y + 14) +
                 "\" text-anchor=\"middle\">" + fixed(it->second, 2) + "</text>\n";
        }
    }
    return s + "</svg>\n";
}

} // namespace

std::vector<std::string> export_report(const FitReport& report, const ParamSet& params,
                                       std::span<const HomogenizationSequence> sequences,
                                       const FieldModel& field, const std::string& dir,
                                       const ExportOptions& options)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        throw Error(ErrorKind::IoError, "cannot create " + dir + ": " + ec.message());
    }
    Writer out(dir);
    if (options.csv) {
        std::string t = "epoch,loss_k2\n";
        for (std::size_t e = 0; e < report.loss_curve.size(); ++e) {
            t += std::to_string(e) + "," + num(report.loss_curve[e]) + "\n";
        }
        out.write("loss_curve.csv", t);

        t = "subfield,era,loop,beta\n";
        for (const auto& b : report.beta) {
            t += b.subfield_id + "," + std::to_string(b.era) + "," + b.loop_id + "," + num(b.beta) + "\n";
        }
        out.write("beta.csv", t);

        t = "period,loop,span,h_pg\n";
        for (const auto& v : report.h_pg) {
            t += v.period_id + "," + v.loop_id + "," + std::to_string(v.span + 1) + "," + num(v.value) + "\n";
        }
        out.write("hpg.csv", t);

        const auto means = hpg_means(report);
        std::size_t n_spans = 0;
        for (const auto& [k, v] : means) {
            n_spans = std::max(n_spans, k.second + 1);
        }
        t = "loop";
        for (std::size_t k = 0; k < n_spans; ++k) {
            t += ",span" + std::to_string(k + 1);
        }
        t += "\n";
        for (const auto& id : field.topology.loop_ids()) {
            std::string row = id;
            bool any = false;
            for (std::size_t k = 0; k < n_spans; ++k) {
                auto it = means.find({id, k});
                row += ",";
                if (it != means.end()) {
                    row += num(it->second);
                    any = true;
                }
            }
            if (any) {
                t += row + "\n";
            }
        }
        out.write("hpg_map.csv", t);

        t = "loop,sensor,rmse_k\n";
        for (const auto& r : report.sensor_rmse) {
            t += r.loop_id + "," + std::to_string(r.sensor + 1) + "," + num(r.rmse) + "\n";
        }
        t += "all,all," + num(report.rmse_overall) + "\n";
        out.write("rmse.csv", t);

        t = "rank,loop,span,h_pg,flagged\n";
        for (std::size_t i = 0; i < report.heat_loss.entries.size(); ++i) {
            const auto& e = report.heat_loss.entries[i];
            t += std::to_string(i + 1) + "," + e.loop_id + "," + std::to_string(e.span + 1) + "," + num(e.h_pg) +
                 "," + (e.flagged ? "1" : "0") + "\n";
        }
        out.write("heat_loss_ranking.csv", t);

        t = "subfield,era,r_squared\n";
        for (const auto& c : report.consistency) {
            t += c.subfield_id + "," + std::to_string(c.era) + "," + num(c.r_squared) + "\n";
        }
        out.write("self_consistency.csv", t);
    }
    if (options.series) {
        for (const auto& seq : sequences) {
            const SequencePrediction pred = predict(params, seq, field);
            std::string t = "timestamp,loop,sensor,measured_k,predicted_k\n";
            for (const auto& lp : pred.loops) {
                const LoopReadings* r = seq.find_loop(lp.loop_id);
                const std::size_t m = lp.n_sensors;
                for (std::size_t n = 0; n < seq.steps(); ++n) {
                    const std::string ts = format_iso8601(seq.t_start + seq.dt * static_cast<double>(n));
                    for (std::size_t k = 0; k < m; ++k) {
                        t += ts + "," + lp.loop_id + "," + std::to_string(k + 1) + "," + num(r->at(n, k)) + "," +
                             num(lp.predicted[n * m + k]) + "\n";
                    }
                }
            }
            out.write("series/" + safe_file_name(seq.id) + ".csv", t);
        }
        for (const auto& bs : report.beta_series) {
            std::string t = "timestamp";
            for (const auto& id : bs.loop_ids) {
                t += ",loop" + id;
            }
            t += "\n";
            for (std::size_t n = 0; n < bs.beta.size(); ++n) {
                t += format_iso8601(bs.t_start + bs.dt * static_cast<double>(n));
                for (double b : bs.beta[n]) {
                    t += "," + num(b);
                }
                t += "\n";
            }
            out.write("beta_series/" + safe_file_name(bs.sequence_id) + ".csv", t);
        }
    }
    if (options.svg) {
        out.write("loss_curve.svg", loss_svg(report.loss_curve));
        out.write("beta.svg", beta_svg(report.beta));
        out.write("hpg_map.svg", hpg_svg(report, field));
    }
    return out.take();
}

} // namespace troughcal
