#pragma once

// Designs, factor specifications and integer model matrices.

#include "nestdoe/error.hpp"
#include "nestdoe/exact_linalg.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace nestdoe {

// ---------------------------------------------------------------------------
// Rational text parsing and rendering

/// Parses `a`, `+a`, `-a`, `a/b` or a finite decimal such as `-0.25`.
inline Rational parse_rational(std::string_view text) {
    auto trim = [](std::string_view s) {
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())))
            s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back())))
            s.remove_suffix(1);
        return s;
    };
    std::string_view s = trim(text);
    auto bad = [&] { return ParseError("not a rational number: '" + std::string(text) + "'", 0); };
    auto parse_int = [&](std::string_view t, bool allow_sign) {
        bool neg = false;
        if (allow_sign && !t.empty() && (t.front() == '+' || t.front() == '-')) {
            neg = t.front() == '-';
            t.remove_prefix(1);
        }
        if (t.empty() || !std::all_of(t.begin(), t.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
            throw bad();
        BigInt v{std::string(t)};
        return neg ? BigInt(-v) : v;
    };
    if (s.empty())
        throw bad();
    if (auto slash = s.find('/'); slash != std::string_view::npos) {
        BigInt num = parse_int(trim(s.substr(0, slash)), true);
        BigInt den = parse_int(trim(s.substr(slash + 1)), false);
        if (den == 0)
            throw ParseError("zero denominator in '" + std::string(text) + "'", 0);
        return Rational(num, den);
    }
    if (auto dot = s.find('.'); dot != std::string_view::npos) {
        std::string_view whole = s.substr(0, dot);
        std::string_view frac = s.substr(dot + 1);
        bool neg = !whole.empty() && whole.front() == '-';
        if (!whole.empty() && (whole.front() == '-' || whole.front() == '+'))
            whole.remove_prefix(1);
        BigInt w = whole.empty() ? BigInt(0) : parse_int(whole, false);
        BigInt f = frac.empty() ? BigInt(0) : parse_int(frac, false);
        if (whole.empty() && frac.empty())
            throw bad();
        BigInt scale = boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(frac.size()));
        Rational r(w * scale + f, scale);
        return neg ? Rational(-r) : r;
    }
    return Rational(parse_int(s, true));
}

/// Always "num/den", also for integers ("1/1"); used where an exact ratio is reported.
inline std::string ratio_string(const Rational& r) {
    return numerator(r).str() + "/" + denominator(r).str();
}

/// Integers without a denominator, everything else as "num/den".
inline std::string value_string(const Rational& r) {
    if (denominator(r) == 1)
        return numerator(r).str();
    return ratio_string(r);
}

/// Round-half-up decimal rendering with a fixed number of places.
inline std::string decimal_string(const Rational& r, unsigned places) {
    const BigInt scale = boost::multiprecision::pow(BigInt(10), places);
    const bool neg = r < 0;
    const Rational a = neg ? Rational(-r) : r;
    BigInt scaled = (numerator(a) * scale * 2 + denominator(a)) / (denominator(a) * 2);
    std::string digits = scaled.str();
    if (digits.size() <= places)
        digits.insert(0, places + 1 - digits.size(), '0');
    std::string out = (neg && scaled != 0) ? "-" : "";
    out += digits.substr(0, digits.size() - places);
    if (places > 0)
        out += "." + digits.substr(digits.size() - places);
    return out;
}

// ---------------------------------------------------------------------------
// Factors and designs

enum class FactorKind { qualitative, quantitative };

/// A factor is a named, finite list of exact level values. Qualitative factors
/// are coded by integer orthogonal-polynomial contrasts; quantitative factors
/// enter model terms through their level values.
struct FactorSpec {
    std::string name;
    FactorKind kind = FactorKind::qualitative;
    std::vector<Rational> values;

    /// s-level qualitative factor with the default level labels
    /// (-1, +1) for s = 2, (-1, 0, +1) for s = 3 and 0..s-1 otherwise.
    static FactorSpec qualitative(std::string name, std::size_t levels) {
        if (levels < 2)
            throw ModelError("factor " + name + " needs at least 2 levels");
        std::vector<Rational> values;
        if (levels == 2)
            values = {Rational(-1), Rational(1)};
        else if (levels == 3)
            values = {Rational(-1), Rational(0), Rational(1)};
        else
            for (std::size_t i = 0; i < levels; ++i)
                values.emplace_back(static_cast<long long>(i));
        return {std::move(name), FactorKind::qualitative, std::move(values)};
    }

    static FactorSpec qualitative(std::string name, std::vector<Rational> values) {
        FactorSpec f{std::move(name), FactorKind::qualitative, std::move(values)};
        f.validate();
        return f;
    }

    static FactorSpec quantitative(std::string name, std::vector<Rational> values) {
        FactorSpec f{std::move(name), FactorKind::quantitative, std::move(values)};
        f.validate();
        return f;
    }

    [[nodiscard]] std::size_t levels() const noexcept { return values.size(); }

    /// Index of `value` in the level list.
    [[nodiscard]] std::size_t level_index(const Rational& value) const {
        auto it = std::find(values.begin(), values.end(), value);
        if (it == values.end())
            throw ModelError("value " + value_string(value) + " is not a level of factor " + name);
        return static_cast<std::size_t>(it - values.begin());
    }

    void validate() const {
        if (values.size() < 2)
            throw ModelError("factor " + name + " needs at least 2 levels");
        for (std::size_t i = 0; i < values.size(); ++i)
            for (std::size_t j = i + 1; j < values.size(); ++j)
                if (values[i] == values[j])
                    throw ModelError("factor " + name + " lists level " + value_string(values[i]) + " twice");
    }
};

/// Runs as rows of exact level values, one entry per factor. Replicated runs
/// are allowed.
struct Design {
    std::vector<std::string> factor_names;
    std::vector<std::string> labels;
    std::vector<std::vector<Rational>> runs;

    [[nodiscard]] std::size_t size() const noexcept { return runs.size(); }

    [[nodiscard]] std::size_t factor_column(std::string_view name) const {
        auto it = std::find(factor_names.begin(), factor_names.end(), name);
        if (it == factor_names.end())
            throw ModelError("design has no column named '" + std::string(name) + "'");
        return static_cast<std::size_t>(it - factor_names.begin());
    }

    /// The first `names.size()` factor columns, renamed.
    [[nodiscard]] Design leading_columns(const std::vector<std::string>& names) const {
        if (names.size() > factor_names.size())
            throw ArgumentError("design has only " + std::to_string(factor_names.size()) + " columns");
        Design out{names, labels, {}};
        out.runs.reserve(runs.size());
        for (const auto& run : runs)
            out.runs.emplace_back(run.begin(), run.begin() + static_cast<std::ptrdiff_t>(names.size()));
        return out;
    }

    /// Sub-design of the given run positions, in the given order.
    [[nodiscard]] Design subset(const std::vector<std::size_t>& positions) const {
        Design out{factor_names, {}, {}};
        for (std::size_t i : positions) {
            if (i >= runs.size())
                throw ArgumentError("run position " + std::to_string(i) + " out of range");
            out.labels.push_back(labels[i]);
            out.runs.push_back(runs[i]);
        }
        return out;
    }

    [[nodiscard]] std::string levels_string(std::size_t run) const {
        std::string out = "(";
        for (std::size_t j = 0; j < runs[run].size(); ++j)
            out += (j ? "," : "") + value_string(runs[run][j]);
        return out + ")";
    }

    friend bool operator==(const Design&, const Design&) = default;
};

inline constexpr std::size_t default_full_factorial_limit = 10'000'000;

/// Cartesian product of the factors' level lists in lexicographic order of
/// level indices (last factor varies fastest). Runs are labelled 1..N.
inline Design full_factorial(const std::vector<FactorSpec>& factors,
                             std::size_t limit = default_full_factorial_limit) {
    if (factors.empty())
        throw ArgumentError("full_factorial needs at least one factor");
    std::size_t total = 1;
    for (const auto& f : factors) {
        f.validate();
        if (total > limit / f.levels())
            throw SizeError("full factorial exceeds " + std::to_string(limit) + " runs");
        total *= f.levels();
    }
    Design d;
    for (const auto& f : factors)
        d.factor_names.push_back(f.name);
    d.runs.reserve(total);
    std::vector<std::size_t> index(factors.size(), 0);
    for (std::size_t r = 0; r < total; ++r) {
        std::vector<Rational> run;
        run.reserve(factors.size());
        for (std::size_t j = 0; j < factors.size(); ++j)
            run.push_back(factors[j].values[index[j]]);
        d.runs.push_back(std::move(run));
        d.labels.push_back(std::to_string(r + 1));
        for (std::size_t j = factors.size(); j-- > 0;) {
            if (++index[j] < factors[j].levels())
                break;
            index[j] = 0;
        }
    }
    return d;
}

/// The 12-run Plackett-Burman design on 11 two-level columns X1..X11: cyclic
/// shifts of the generator row plus a final all-minus row.
inline Design plackett_burman_12() {
    constexpr std::array<int, 11> generator{+1, +1, -1, +1, +1, +1, -1, -1, -1, +1, -1};
    Design d;
    for (int j = 0; j < 11; ++j)
        d.factor_names.push_back("X" + std::to_string(j + 1));
    for (int i = 0; i < 12; ++i) {
        std::vector<Rational> run;
        for (int j = 0; j < 11; ++j)
            run.emplace_back(i == 11 ? -1 : generator[static_cast<std::size_t>((j - i + 11) % 11)]);
        d.runs.push_back(std::move(run));
        d.labels.push_back(std::to_string(i + 1));
    }
    return d;
}

/// The regular OA(27, 3^4, 2): the 3^3 full factorial in x1, x2, x3 plus
/// x4 = x1 + x2 + x3 (mod 3). Levels are written -1, 0, +1.
inline Design orthogonal_array_3_4() {
    Design d;
    d.factor_names = {"X1", "X2", "X3", "X4"};
    int label = 1;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            for (int c = 0; c < 3; ++c) {
                const int e = (a + b + c) % 3;
                d.runs.push_back({Rational(a - 1), Rational(b - 1), Rational(c - 1), Rational(e - 1)});
                d.labels.push_back(std::to_string(label++));
            }
    return d;
}

// ---------------------------------------------------------------------------
// Design CSV

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ','))
        cells.push_back(cell);
    if (!line.empty() && line.back() == ',')
        cells.emplace_back();
    for (auto& c : cells) {
        auto b = c.find_first_not_of(" \t\r");
        auto e = c.find_last_not_of(" \t\r");
        c = (b == std::string::npos) ? std::string() : c.substr(b, e - b + 1);
    }
    return cells;
}

} // namespace detail

/// Reads `run,<factor names...>` followed by one row per run.
inline Design parse_design_csv(std::istream& in) {
    Design d;
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos)
            continue;
        auto cells = detail::split_csv_line(line);
        if (!have_header) {
            if (cells.size() < 2 || cells[0] != "run")
                throw ParseError("header must be 'run,<factor names...>'", line_no);
            d.factor_names.assign(cells.begin() + 1, cells.end());
            for (const auto& name : d.factor_names)
                if (name.empty())
                    throw ParseError("empty factor name in header", line_no);
            have_header = true;
            continue;
        }
        if (cells.size() != d.factor_names.size() + 1)
            throw ParseError("expected " + std::to_string(d.factor_names.size() + 1) + " fields, found " +
                                 std::to_string(cells.size()),
                             line_no);
        if (cells[0].empty())
            throw ParseError("empty run label", line_no);
        std::vector<Rational> run;
        for (std::size_t j = 1; j < cells.size(); ++j) {
            try {
                run.push_back(parse_rational(cells[j]));
            } catch (const ParseError& e) {
                throw ParseError(e.what(), line_no);
            }
        }
        d.labels.push_back(cells[0]);
        d.runs.push_back(std::move(run));
    }
    if (!have_header)
        throw ParseError("empty design file", 0);
    if (d.runs.empty())
        throw ParseError("design has a header but no runs", line_no);
    return d;
}

inline Design load_design_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open design file '" + path + "'");
    try {
        return parse_design_csv(in);
    } catch (const ParseError& e) {
        throw ParseError(path + ": " + e.what(), 0);
    }
}

inline void write_design_csv(std::ostream& out, const Design& d) {
    out << "run";
    for (const auto& name : d.factor_names)
        out << ',' << name;
    out << '\n';
    for (std::size_t i = 0; i < d.size(); ++i) {
        out << d.labels[i];
        for (const auto& v : d.runs[i])
            out << ',' << value_string(v);
        out << '\n';
    }
}

// ---------------------------------------------------------------------------
// Model specification

/// A product of factor powers; the empty product is the intercept.
struct Term {
    std::vector<std::pair<std::size_t, unsigned>> parts; // (factor index, power)

    [[nodiscard]] bool is_intercept() const noexcept { return parts.empty(); }
};

struct ModelSpec {
    std::vector<FactorSpec> factors;
    std::vector<Term> terms;

    [[nodiscard]] std::size_t factor_index(std::string_view name) const {
        for (std::size_t i = 0; i < factors.size(); ++i)
            if (factors[i].name == name)
                return i;
        throw ModelError("model term references undeclared factor '" + std::string(name) + "'");
    }

    /// Parses "1", "A", "A*B", "A^2", "A^2*B".
    [[nodiscard]] Term parse_term(std::string_view text) const {
        std::string s;
        for (char c : text)
            if (!std::isspace(static_cast<unsigned char>(c)))
                s.push_back(c);
        if (s == "1")
            return {};
        if (s.empty())
            throw ModelError("empty model term");
        Term t;
        std::istringstream is(s);
        std::string piece;
        while (std::getline(is, piece, '*')) {
            unsigned power = 1;
            std::string name = piece;
            if (auto caret = piece.find('^'); caret != std::string::npos) {
                name = piece.substr(0, caret);
                const std::string exp = piece.substr(caret + 1);
                if (exp.empty() || !std::all_of(exp.begin(), exp.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); }))
                    throw ModelError("bad exponent in term '" + std::string(text) + "'");
                power = static_cast<unsigned>(std::stoul(exp));
                if (power == 0)
                    throw ModelError("zero exponent in term '" + std::string(text) + "'");
            }
            const std::size_t f = factor_index(name);
            if (factors[f].kind == FactorKind::qualitative && power != 1)
                throw ModelError("power of qualitative factor '" + name + "'; declare it quantitative");
            for (const auto& [g, _] : t.parts)
                if (g == f)
                    throw ModelError("factor '" + name + "' repeated in term '" + std::string(text) + "'");
            t.parts.emplace_back(f, power);
        }
        return t;
    }

    void add_term(std::string_view text) { terms.push_back(parse_term(text)); }

    /// Number of model-matrix rows: qualitative factors contribute s-1
    /// contrasts per appearance, quantitative ones a single column.
    [[nodiscard]] std::size_t parameter_count() const {
        std::size_t p = 0;
        for (const auto& t : terms) {
            std::size_t rows = 1;
            for (const auto& [f, _] : t.parts)
                if (factors[f].kind == FactorKind::qualitative)
                    rows *= factors[f].levels() - 1;
            p += rows;
        }
        return p;
    }
};

/// Intercept plus all main effects of the given factors.
inline ModelSpec main_effects_model(std::vector<FactorSpec> factors) {
    ModelSpec m{std::move(factors), {}};
    m.terms.emplace_back();
    for (std::size_t i = 0; i < m.factors.size(); ++i)
        m.terms.push_back(Term{{{i, 1}}});
    return m;
}

inline ModelSpec parse_model_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("model JSON: ") + e.what(), 0);
    }
    auto rational_of = [](const nlohmann::json& v) {
        if (v.is_number_integer())
            return Rational(v.get<long long>());
        if (v.is_string())
            return parse_rational(v.get<std::string>());
        if (v.is_number())
            return parse_rational(v.dump());
        throw ModelError("level values must be numbers or strings");
    };
    ModelSpec m;
    try {
        if (!j.contains("factors") || !j["factors"].is_array())
            throw ModelError("model JSON needs a 'factors' array");
        if (!j.contains("terms") || !j["terms"].is_array())
            throw ModelError("model JSON needs a 'terms' array");
        for (const auto& f : j["factors"]) {
            const auto name = f.at("name").get<std::string>();
            const auto type = f.value("type", std::string("qualitative"));
            std::vector<Rational> values;
            if (f.contains("values"))
                for (const auto& v : f["values"])
                    values.push_back(rational_of(v));
            if (type == "quantitative") {
                if (values.empty())
                    throw ModelError("quantitative factor " + name + " needs 'values'");
                m.factors.push_back(FactorSpec::quantitative(name, std::move(values)));
            } else if (type == "qualitative") {
                if (!values.empty()) {
                    if (f.contains("levels") && f["levels"].get<std::size_t>() != values.size())
                        throw ModelError("factor " + name + ": 'levels' disagrees with 'values'");
                    m.factors.push_back(FactorSpec::qualitative(name, std::move(values)));
                } else {
                    m.factors.push_back(FactorSpec::qualitative(name, f.at("levels").get<std::size_t>()));
                }
            } else {
                throw ModelError("factor " + name + ": unknown type '" + type + "'");
            }
        }
        for (std::size_t a = 0; a < m.factors.size(); ++a)
            for (std::size_t b = a + 1; b < m.factors.size(); ++b)
                if (m.factors[a].name == m.factors[b].name)
                    throw ModelError("factor '" + m.factors[a].name + "' declared twice");
        for (const auto& t : j["terms"])
            m.add_term(t.get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("model JSON: ") + e.what(), 0);
    }
    if (m.terms.empty())
        throw ModelError("model has no terms");
    return m;
}

inline ModelSpec load_model_json(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open model file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_model_json(ss.str());
}

// ---------------------------------------------------------------------------
// Model matrix

/// Integer orthogonal-polynomial contrasts for s equally spaced levels:
/// s-1 primitive integer vectors of length s, degree 1..s-1, each with a
/// positive last entry. For s = 3 these are (-1,0,1) and (1,-2,1).
inline std::vector<std::vector<BigInt>> orthogonal_contrasts(std::size_t s) {
    std::vector<std::vector<Rational>> basis; // Gram-Schmidt over 1, x, x^2, ...
    std::vector<std::vector<BigInt>> out;
    for (std::size_t degree = 0; degree < s; ++degree) {
        std::vector<Rational> v(s);
        for (std::size_t x = 0; x < s; ++x) {
            Rational pw = 1;
            for (std::size_t e = 0; e < degree; ++e)
                pw *= static_cast<long long>(x);
            v[x] = pw;
        }
        for (const auto& b : basis) {
            Rational vb = 0, bb = 0;
            for (std::size_t x = 0; x < s; ++x) {
                vb += v[x] * b[x];
                bb += b[x] * b[x];
            }
            const Rational coef = vb / bb;
            for (std::size_t x = 0; x < s; ++x)
                v[x] -= coef * b[x];
        }
        basis.push_back(v);
        if (degree == 0)
            continue;
        BigInt lcd = 1;
        for (const auto& r : v)
            lcd = boost::multiprecision::lcm(lcd, BigInt(denominator(r)));
        std::vector<BigInt> iv(s);
        for (std::size_t x = 0; x < s; ++x)
            iv[x] = numerator(Rational(v[x] * lcd));
        BigInt g = 0;
        for (const auto& e : iv)
            g = boost::multiprecision::gcd(g, BigInt(abs(e)));
        if (iv.back() < 0)
            g = -g;
        for (auto& e : iv)
            e /= g;
        out.push_back(std::move(iv));
    }
    return out;
}

/// Builds the transposed model matrix A = X^t (p rows, one column per run).
/// Rows with rational entries are scaled by their least common denominator.
/// Throws ModelError unless the result has full row rank p.
inline IntegerMatrix model_matrix(const Design& design, const ModelSpec& model) {
    if (design.size() == 0)
        throw ModelError("design has no runs");
    if (model.terms.empty())
        throw ModelError("model has no terms");
    const std::size_t n = design.size();
    std::vector<std::size_t> column(model.factors.size());
    for (std::size_t f = 0; f < model.factors.size(); ++f)
        column[f] = design.factor_column(model.factors[f].name);

    // Level index of each run for qualitative factors.
    std::vector<std::vector<std::size_t>> level(model.factors.size(), std::vector<std::size_t>(n));
    std::vector<std::vector<std::vector<BigInt>>> contrasts(model.factors.size());
    for (std::size_t f = 0; f < model.factors.size(); ++f) {
        const auto& spec = model.factors[f];
        for (std::size_t r = 0; r < n; ++r) {
            const auto idx = spec.level_index(design.runs[r][column[f]]);
            level[f][r] = idx;
        }
        if (spec.kind == FactorKind::qualitative)
            contrasts[f] = orthogonal_contrasts(spec.levels());
    }

    std::vector<std::vector<Rational>> rows;
    for (const auto& term : model.terms) {
        // Iterate every combination of contrast indices of the qualitative parts.
        std::vector<std::size_t> choice(term.parts.size(), 0);
        while (true) {
            std::vector<Rational> row(n, Rational(1));
            for (std::size_t t = 0; t < term.parts.size(); ++t) {
                const auto [f, power] = term.parts[t];
                const auto& spec = model.factors[f];
                for (std::size_t r = 0; r < n; ++r) {
                    if (spec.kind == FactorKind::qualitative) {
                        row[r] *= Rational(contrasts[f][choice[t]][level[f][r]]);
                    } else {
                        const Rational& v = design.runs[r][column[f]];
                        for (unsigned e = 0; e < power; ++e)
                            row[r] *= v;
                    }
                }
            }
            rows.push_back(std::move(row));
            std::size_t t = term.parts.size();
            while (t-- > 0) {
                const auto f = term.parts[t].first;
                const std::size_t limit =
                    model.factors[f].kind == FactorKind::qualitative ? model.factors[f].levels() - 1 : 1;
                if (++choice[t] < limit)
                    break;
                choice[t] = 0;
            }
            if (t == static_cast<std::size_t>(-1))
                break;
        }
    }

    IntegerMatrix a(rows.size(), n);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        BigInt lcd = 1;
        for (const auto& v : rows[i])
            lcd = boost::multiprecision::lcm(lcd, BigInt(denominator(v)));
        for (std::size_t r = 0; r < n; ++r)
            a(i, r) = numerator(Rational(rows[i][r] * lcd));
    }
    const std::size_t rk = rank(a);
    if (rk < a.rows())
        throw ModelError("model matrix has rank " + std::to_string(rk) + " < p = " +
                         std::to_string(a.rows()) + " on this design; the model is not estimable");
    return a;
}

} // namespace nestdoe
