#include "volsmooth/market_data.hpp"

#include "volsmooth/black_scholes.hpp"
#include "volsmooth/errors.hpp"
#include "volsmooth/log.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <utility>

namespace volsmooth::market {

namespace {

constexpr double kDaysPerYear = 365.25;

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string_view> split(std::string_view line, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (std::size_t i = 0; i <= line.size(); ++i) {
        if (i == line.size() || line[i] == sep) {
            out.push_back(trim(line.substr(start, i - start)));
            start = i + 1;
        }
    }
    return out;
}

double parse_double(std::string_view s, std::size_t line_no, std::string_view column) {
    double value = 0.0;
    const auto* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(s.data(), end, value);
    if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
        throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": cannot parse " +
                                          std::string(column) + " value '" + std::string(s) + "'");
    }
    return value;
}

std::optional<double> parse_optional(std::string_view s, std::size_t line_no, std::string_view column) {
    if (s.empty()) return std::nullopt;
    return parse_double(s, line_no, column);
}

std::optional<double> mid_of(const std::optional<double>& bid, const std::optional<double>& ask) {
    if (!bid || !ask) return std::nullopt;
    return 0.5 * (*bid + *ask);
}

bool crossed(const std::optional<double>& bid, const std::optional<double>& ask) {
    return bid && ask && *bid > *ask;
}

std::chrono::sys_days parse_date(std::string_view s) {
    int y = 0;
    unsigned m = 0;
    unsigned d = 0;
    const std::string text(s);
    char tail = 0;
    if (std::sscanf(text.c_str(), "%d-%u-%u%c", &y, &m, &d, &tail) < 3) {
        throw Error(ErrorCode::Parse, "invalid date '" + text + "'");
    }
    const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
    if (!ymd.ok()) throw Error(ErrorCode::Parse, "invalid date '" + text + "'");
    return std::chrono::sys_days{ymd};
}

std::string format_number(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

std::string format_optional(const std::optional<double>& x) { return x ? format_number(*x) : std::string{}; }

}  // namespace

std::optional<double> RawQuoteRow::call_mid() const { return mid_of(call_bid, call_ask); }
std::optional<double> RawQuoteRow::put_mid() const { return mid_of(put_bid, put_ask); }

Instant parse_instant(const std::string& text) {
    const auto sv = trim(text);
    const auto date = parse_date(sv.substr(0, std::min<std::size_t>(10, sv.size())));
    Instant t = std::chrono::time_point_cast<std::chrono::seconds>(date);
    if (sv.size() > 10) {
        if (sv[10] != 'T' && sv[10] != ' ') throw Error(ErrorCode::Parse, "invalid instant '" + text + "'");
        int hh = 0;
        int mm = 0;
        int ss = 0;
        const std::string clock(sv.substr(11));
        const int n = std::sscanf(clock.c_str(), "%d:%d:%d", &hh, &mm, &ss);
        if (n < 2 || hh < 0 || hh > 23 || mm < 0 || mm > 59 || ss < 0 || ss > 60) {
            throw Error(ErrorCode::Parse, "invalid instant '" + text + "'");
        }
        t += std::chrono::hours(hh) + std::chrono::minutes(mm) + std::chrono::seconds(ss);
    }
    return t;
}

double year_fraction(Instant now, const std::string& expiry_date) {
    const auto expiry = std::chrono::time_point_cast<std::chrono::seconds>(parse_date(expiry_date)) +
                        std::chrono::hours(16);
    const double seconds = static_cast<double>((expiry - now).count());
    return seconds / (kDaysPerYear * 86400.0);
}

ForwardCurvePoint fit_forward(const std::vector<RawQuoteRow>& expiry_rows) {
    std::vector<std::pair<double, double>> xy;
    std::set<double> strikes;
    for (const auto& row : expiry_rows) {
        if (crossed(row.call_bid, row.call_ask) || crossed(row.put_bid, row.put_ask)) continue;
        const auto c = row.call_mid();
        const auto p = row.put_mid();
        if (!c || !p) continue;
        xy.emplace_back(row.strike, *c - *p);
        strikes.insert(row.strike);
    }
    if (strikes.size() < 2) {
        throw Error(ErrorCode::Underdetermined, "need at least two strikes quoted on both sides");
    }
    double mean_x = 0.0;
    double mean_y = 0.0;
    for (const auto& [x, y] : xy) {
        mean_x += x;
        mean_y += y;
    }
    mean_x /= static_cast<double>(xy.size());
    mean_y /= static_cast<double>(xy.size());
    double sxx = 0.0;
    double sxy = 0.0;
    for (const auto& [x, y] : xy) {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
    }
    const double slope = sxy / sxx;
    const double intercept = mean_y - slope * mean_x;

    ForwardCurvePoint out;
    out.expiry = expiry_rows.front().expiry;
    out.discount_factor = -slope;
    if (!(out.discount_factor > 0.0)) {
        throw Error(ErrorCode::DegenerateParity, "fitted discount factor is not positive");
    }
    out.forward = intercept / out.discount_factor;
    if (!(out.forward > 0.0)) throw Error(ErrorCode::DegenerateParity, "fitted forward is not positive");
    return out;
}

SurfaceSnapshot build_snapshot(const std::vector<RawQuoteRow>& rows, Instant now, const Domain& domain) {
    std::map<std::string, std::vector<RawQuoteRow>> by_expiry;
    for (const auto& row : rows) {
        if (crossed(row.call_bid, row.call_ask) || crossed(row.put_bid, row.put_ask)) {
            log_warn("dropping crossed quote: expiry " + row.expiry + " strike " + format_number(row.strike));
            continue;
        }
        by_expiry[row.expiry].push_back(row);
    }

    SurfaceSnapshot snap;
    snap.timestamp = rows.empty() ? std::string{} : rows.front().timestamp;
    std::set<std::pair<double, double>> seen;

    for (const auto& [expiry, group] : by_expiry) {
        const double tau = year_fraction(now, expiry);
        if (!(tau > 0.0)) continue;
        ForwardCurvePoint fwd;
        try {
            fwd = fit_forward(group);
        } catch (const Error& e) {
            log_warn("skipping expiry " + expiry + ": " + e.what());
            continue;
        }
        const double scale = fwd.discount_factor * fwd.forward;
        for (const auto& row : group) {
            if (!(row.strike > 0.0)) continue;
            const double k = std::log(row.strike / fwd.forward);
            const OptionSide side = otm_side(k);
            const auto& bid = side == OptionSide::Call ? row.call_bid : row.put_bid;
            const auto& ask = side == OptionSide::Call ? row.call_ask : row.put_ask;
            const auto mid = mid_of(bid, ask);
            if (!mid) continue;

            const double rho = std::sqrt(tau);
            const double z = k / rho;
            if (!domain.contains(rho, z)) continue;

            OptionRecord rec;
            rec.tau = tau;
            rec.k = k;
            rec.rho = rho;
            rec.z = z;
            rec.side = side;
            try {
                rec.iv_mid = bs::implied_vol(tau, k, *mid / scale);
            } catch (const Error&) {
                continue;
            }
            try {
                rec.iv_bid = bs::implied_vol(tau, k, *bid / scale);
            } catch (const Error&) {
            }
            try {
                rec.iv_ask = bs::implied_vol(tau, k, *ask / scale);
            } catch (const Error&) {
            }
            if (!seen.insert({rho, z}).second) continue;
            snap.records.push_back(rec);
        }
    }
    if (snap.records.empty()) throw Error(ErrorCode::EmptySnapshot, "no quotes survived filtering");
    return snap;
}

std::vector<SurfaceSnapshot> ingest(const std::vector<RawQuoteRow>& rows, const Domain& domain) {
    std::map<Instant, std::pair<std::string, std::vector<RawQuoteRow>>> groups;
    for (const auto& row : rows) {
        auto& g = groups[parse_instant(row.timestamp)];
        g.first = row.timestamp;
        g.second.push_back(row);
    }
    std::vector<SurfaceSnapshot> out;
    for (const auto& [now, g] : groups) {
        try {
            auto snap = build_snapshot(g.second, now, domain);
            snap.timestamp = g.first;
            out.push_back(std::move(snap));
        } catch (const Error& e) {
            if (e.code() != ErrorCode::EmptySnapshot) throw;
            log_warn("timestamp " + g.first + " produced an empty snapshot");
        }
    }
    return out;
}

std::vector<RawQuoteRow> parse_quotes_csv(const std::string& text) {
    static const std::vector<std::string> required = {"timestamp", "expiry",  "strike",  "call_bid",
                                                      "call_ask",  "put_bid", "put_ask", "underlying_mid"};
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    std::map<std::string, std::size_t> col;
    bool have_header = false;
    while (!have_header && std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto cells = split(line, ',');
        if (line_no == 1 && !cells.empty() && cells[0].starts_with("\xEF\xBB\xBF")) cells[0].remove_prefix(3);
        for (std::size_t i = 0; i < cells.size(); ++i) col[std::string(cells[i])] = i;
        have_header = true;
    }
    if (!have_header) throw Error(ErrorCode::Schema, "missing header");
    for (const auto& name : required) {
        if (!col.contains(name)) throw Error(ErrorCode::Schema, "missing column '" + name + "'");
    }

    std::vector<RawQuoteRow> rows;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() < col.size()) {
            throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": expected " +
                                              std::to_string(col.size()) + " cells");
        }
        auto cell = [&](const std::string& name) { return cells[col.at(name)]; };
        RawQuoteRow row;
        row.timestamp = std::string(cell("timestamp"));
        row.expiry = std::string(cell("expiry"));
        try {
            parse_instant(row.timestamp);
            parse_date(row.expiry);
        } catch (const Error& e) {
            throw Error(ErrorCode::Parse, "line " + std::to_string(line_no) + ": " + e.what());
        }
        row.strike = parse_double(cell("strike"), line_no, "strike");
        row.call_bid = parse_optional(cell("call_bid"), line_no, "call_bid");
        row.call_ask = parse_optional(cell("call_ask"), line_no, "call_ask");
        row.put_bid = parse_optional(cell("put_bid"), line_no, "put_bid");
        row.put_ask = parse_optional(cell("put_ask"), line_no, "put_ask");
        row.underlying_mid = parse_double(cell("underlying_mid"), line_no, "underlying_mid");
        rows.push_back(std::move(row));
    }
    return rows;
}

std::vector<RawQuoteRow> load_quotes_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_quotes_csv(buf.str());
}

void write_quotes_csv(const std::filesystem::path& path, const std::vector<RawQuoteRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << "timestamp,expiry,strike,call_bid,call_ask,put_bid,put_ask,underlying_mid\n";
    for (const auto& r : rows) {
        out << r.timestamp << ',' << r.expiry << ',' << format_number(r.strike) << ','
            << format_optional(r.call_bid) << ',' << format_optional(r.call_ask) << ','
            << format_optional(r.put_bid) << ',' << format_optional(r.put_ask) << ','
            << format_number(r.underlying_mid) << '\n';
    }
}

nlohmann::json snapshot_to_json(const SurfaceSnapshot& snapshot) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& r : snapshot.records) {
        points.push_back({
            {"rho", r.rho},
            {"z", r.z},
            {"tau", r.tau},
            {"k", r.k},
            {"iv", r.iv_mid},
            {"iv_bid", r.iv_bid ? nlohmann::json(*r.iv_bid) : nlohmann::json(nullptr)},
            {"iv_ask", r.iv_ask ? nlohmann::json(*r.iv_ask) : nlohmann::json(nullptr)},
            {"side", r.side == OptionSide::Call ? "call" : "put"},
        });
    }
    return {{"format_version", 1}, {"timestamp", snapshot.timestamp}, {"points", std::move(points)}};
}

SurfaceSnapshot snapshot_from_json(const nlohmann::json& j) {
    try {
        if (j.at("format_version").get<int>() != 1) throw Error(ErrorCode::Schema, "unsupported format_version");
        SurfaceSnapshot snap;
        snap.timestamp = j.at("timestamp").get<std::string>();
        for (const auto& p : j.at("points")) {
            OptionRecord r;
            r.rho = p.at("rho").get<double>();
            r.z = p.at("z").get<double>();
            r.tau = p.contains("tau") ? p.at("tau").get<double>() : r.rho * r.rho;
            r.k = p.contains("k") ? p.at("k").get<double>() : r.z * r.rho;
            r.iv_mid = p.at("iv").get<double>();
            if (p.contains("iv_bid") && !p.at("iv_bid").is_null()) r.iv_bid = p.at("iv_bid").get<double>();
            if (p.contains("iv_ask") && !p.at("iv_ask").is_null()) r.iv_ask = p.at("iv_ask").get<double>();
            r.side = p.contains("side") && p.at("side").get<std::string>() == "call" ? OptionSide::Call
                                                                                    : OptionSide::Put;
            if (!(r.rho > 0.0) || !(r.iv_mid > 0.0)) throw Error(ErrorCode::Schema, "invalid point");
            snap.records.push_back(r);
        }
        return snap;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Schema, std::string("snapshot JSON: ") + e.what());
    }
}

namespace {

nlohmann::json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Parse, path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
    out << j.dump(1) << '\n';
}

}  // namespace

void save_snapshot(const std::filesystem::path& path, const SurfaceSnapshot& snapshot) {
    write_json(path, snapshot_to_json(snapshot));
}

SurfaceSnapshot load_snapshot(const std::filesystem::path& path) { return snapshot_from_json(read_json(path)); }

std::vector<SurfaceSnapshot> load_snapshots(const std::filesystem::path& path) {
    const auto j = read_json(path);
    std::vector<SurfaceSnapshot> out;
    if (j.is_array()) {
        for (const auto& item : j) out.push_back(snapshot_from_json(item));
    } else {
        out.push_back(snapshot_from_json(j));
    }
    return out;
}

void save_snapshots(const std::filesystem::path& path, const std::vector<SurfaceSnapshot>& snapshots) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& s : snapshots) arr.push_back(snapshot_to_json(s));
    write_json(path, arr);
}

}  // namespace volsmooth::market
