#include "pvdisagg/csv.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "pvdisagg/errors.hpp"

namespace pvdisagg {

namespace {

std::vector<std::string_view> split_line(std::string_view line, std::vector<std::string_view>& out) {
    out.clear();
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        if (comma == std::string_view::npos) {
            out.push_back(line.substr(pos));
            break;
        }
        out.push_back(line.substr(pos, comma - pos));
        pos = comma + 1;
    }
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

struct Row {
    HourStamp stamp;
    double kwh;
    std::size_t line_no;
};

}  // namespace

std::string format_kwh(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v == 0.0 ? 0.0 : v);
    return buf;
}

std::vector<LoadedSeries> load_series_csv(const std::string& path, const CsvLoadOptions& options) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw IngestError(path + ": empty file");

    std::vector<std::string_view> cols;
    split_line(line, cols);
    int id_col = -1, ts_col = -1, kwh_col = -1, role_col = -1;
    for (int i = 0; i < static_cast<int>(cols.size()); ++i) {
        const std::string_view c = trim(cols[i]);
        if (c == "customer_id") id_col = i;
        else if (c == "timestamp") ts_col = i;
        else if (c == "kwh") kwh_col = i;
        else if (c == "role") role_col = i;
    }
    if (id_col < 0 || ts_col < 0 || kwh_col < 0) {
        throw IngestError(path + ": header must contain customer_id,timestamp,kwh");
    }

    std::map<std::string, std::vector<Row>> rows;
    std::map<std::string, Role> roles;
    std::vector<std::string> order;

    std::size_t line_no = 1;
    const int need = std::max({id_col, ts_col, kwh_col, role_col}) + 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        split_line(line, cols);
        if (static_cast<int>(cols.size()) < need) {
            throw IngestError(path + ":" + std::to_string(line_no) + ": expected at least " +
                              std::to_string(need) + " columns");
        }
        const std::string id{trim(cols[id_col])};
        if (id.empty())
            throw IngestError(path + ":" + std::to_string(line_no) + ": empty customer_id");

        const auto stamp = HourStamp::parse(trim(cols[ts_col]));
        if (!stamp) {
            throw IngestError(path + ":" + std::to_string(line_no) + ": bad timestamp '" +
                              std::string(trim(cols[ts_col])) + "'");
        }

        const std::string_view kwh_text = trim(cols[kwh_col]);
        double kwh = 0.0;
        const auto [p, ec] = std::from_chars(kwh_text.data(), kwh_text.data() + kwh_text.size(), kwh);
        if (ec != std::errc{} || p != kwh_text.data() + kwh_text.size() || !std::isfinite(kwh)) {
            throw IngestError(path + ":" + std::to_string(line_no) + ": bad kwh value '" +
                              std::string(kwh_text) + "'");
        }

        Role role;
        if (role_col >= 0) {
            const auto parsed = role_from_string(trim(cols[role_col]));
            if (!parsed) {
                throw IngestError(path + ":" + std::to_string(line_no) + ": unknown role '" +
                                  std::string(trim(cols[role_col])) + "'");
            }
            if (options.forced_role && *parsed != *options.forced_role) {
                throw IngestError(path + ":" + std::to_string(line_no) + ": role '" +
                                  to_string(*parsed) + "' conflicts with expected '" +
                                  to_string(*options.forced_role) + "'");
            }
            role = *parsed;
        } else if (options.forced_role) {
            role = *options.forced_role;
        } else {
            throw IngestError(path + ": no role column and no expected role given");
        }

        auto [it, inserted] = roles.try_emplace(id, role);
        if (inserted) order.push_back(id);
        else if (it->second != role) {
            throw IngestError(path + ":" + std::to_string(line_no) + ": customer '" + id +
                              "' appears with conflicting roles");
        }
        rows[id].push_back(Row{*stamp, kwh, line_no});
    }

    std::vector<LoadedSeries> out;
    out.reserve(order.size());
    for (const auto& id : order) {
        auto& rs = rows[id];
        std::sort(rs.begin(), rs.end(), [](const Row& a, const Row& b) { return a.stamp < b.stamp; });
        for (std::size_t i = 1; i < rs.size(); ++i) {
            if (rs[i].stamp == rs[i - 1].stamp) {
                throw IngestError(path + ":" + std::to_string(rs[i].line_no) +
                                  ": duplicate timestamp " + rs[i].stamp.to_string() +
                                  " for customer '" + id + "'");
            }
        }

        std::vector<double> values;
        std::vector<HourStamp> filled;
        values.push_back(rs[0].kwh);
        for (std::size_t i = 1; i < rs.size(); ++i) {
            const std::int64_t gap = rs[i].stamp - rs[i - 1].stamp - 1;
            if (gap > 0) {
                if (!options.fill_gaps || gap > options.max_gap_hours) {
                    throw IngestError(path + ": customer '" + id + "' has a " +
                                      std::to_string(gap) + "-hour gap before " +
                                      rs[i].stamp.to_string() +
                                      (options.fill_gaps ? " (exceeds fill limit)" : ""));
                }
                const double lo = rs[i - 1].kwh, hi = rs[i].kwh;
                for (std::int64_t g = 1; g <= gap; ++g) {
                    const double f = static_cast<double>(g) / static_cast<double>(gap + 1);
                    values.push_back(lo + (hi - lo) * f);
                    filled.push_back(rs[i - 1].stamp + g);
                }
            }
            values.push_back(rs[i].kwh);
        }

        HourlySeries series(id, rs[0].stamp, std::move(values), roles[id]);
        if (series.role() == Role::generation) series = negate_generation(series);
        out.push_back(LoadedSeries{std::move(series), std::move(filled)});
    }
    if (out.empty()) throw IngestError(path + ": no data rows");
    return out;
}

void write_series_csv(const std::string& path, std::span<const HourlySeries> series,
                      bool raw_generation_sign) {
    std::ofstream outf(path);
    if (!outf) throw IngestError("cannot write '" + path + "'");
    outf << "customer_id,timestamp,kwh,role\n";
    for (const auto& s : series) {
        const bool flip = raw_generation_sign && s.role() == Role::generation;
        for (std::size_t i = 0; i < s.size(); ++i) {
            const double v = flip ? -s.value(i) : s.value(i);
            outf << s.customer_id() << ',' << s.stamp(i).to_string() << ',' << format_kwh(v) << ','
                 << to_string(s.role()) << '\n';
        }
    }
    if (!outf) throw IngestError("write failed for '" + path + "'");
}

CustomerEstimate load_customer_estimate_csv(const std::string& path,
                                            const std::string& customer_id) {
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) ||
        trim(line) != "timestamp,net_kwh,gen_est_kwh,native_est_kwh") {
        throw IngestError(path + ": not a customer estimate file");
    }

    std::vector<std::string_view> cols;
    std::optional<HourStamp> start;
    std::vector<double> net, gen, native;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        split_line(line, cols);
        if (cols.size() != 4)
            throw IngestError(path + ":" + std::to_string(line_no) + ": expected 4 columns");
        const auto stamp = HourStamp::parse(trim(cols[0]));
        if (!stamp)
            throw IngestError(path + ":" + std::to_string(line_no) + ": bad timestamp");
        if (!start) start = *stamp;
        else if ((*stamp - *start) != static_cast<std::int64_t>(net.size()))
            throw IngestError(path + ":" + std::to_string(line_no) +
                              ": timestamps must be contiguous and ascending");
        double v[3];
        for (int c = 0; c < 3; ++c) {
            const std::string_view text = trim(cols[c + 1]);
            const auto [p, ec] = std::from_chars(text.data(), text.data() + text.size(), v[c]);
            if (ec != std::errc{} || p != text.data() + text.size() || !std::isfinite(v[c])) {
                throw IngestError(path + ":" + std::to_string(line_no) + ": bad value '" +
                                  std::string(text) + "'");
            }
        }
        if (v[1] < 0.0)
            throw IngestError(path + ":" + std::to_string(line_no) +
                              ": gen_est_kwh must be non-negative");
        net.push_back(v[0]);
        gen.push_back(v[1] == 0.0 ? 0.0 : -v[1]);
        native.push_back(v[2]);
    }
    if (!start) throw IngestError(path + ": no data rows");
    return CustomerEstimate{
        HourlySeries(customer_id, *start, std::move(net), Role::net),
        HourlySeries(customer_id, *start, std::move(gen), Role::generation),
        HourlySeries(customer_id, *start, std::move(native), Role::native)};
}

void write_customer_estimate_csv(const std::string& path, const HourlySeries& net,
                                 const HourlySeries& gen_estimate,
                                 const HourlySeries& native_estimate) {
    if (net.size() != gen_estimate.size() || net.size() != native_estimate.size() ||
        net.start() != gen_estimate.start() || net.start() != native_estimate.start()) {
        throw std::invalid_argument("estimate series are not aligned with the net series");
    }
    std::ofstream outf(path);
    if (!outf) throw IngestError("cannot write '" + path + "'");
    outf << "timestamp,net_kwh,gen_est_kwh,native_est_kwh\n";
    for (std::size_t i = 0; i < net.size(); ++i) {
        outf << net.stamp(i).to_string() << ',' << format_kwh(net.value(i)) << ','
             << format_kwh(-gen_estimate.value(i)) << ',' << format_kwh(native_estimate.value(i))
             << '\n';
    }
    if (!outf) throw IngestError("write failed for '" + path + "'");
}

}  // namespace pvdisagg
