// io.hpp: CSV tables and the plain-text Hamiltonian format
#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "model.hpp"

namespace eetsim::io {

inline std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Column-major numeric table with named columns.
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;
    std::vector<std::string> comments;  // lines starting with '#', without the '#'

    std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }

    int find(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
    const std::vector<double>& column(const std::string& name) const {
        int i = find(name);
        if (i < 0) throw std::out_of_range("no column " + name);
        return columns[i];
    }
    void add_column(std::string name, std::vector<double> v) {
        if (!columns.empty() && v.size() != rows())
            throw std::invalid_argument("column length mismatch for " + name);
        header.push_back(std::move(name));
        columns.push_back(std::move(v));
    }
};

inline void write_table(std::ostream& os, const Table& t) {
    for (const auto& c : t.comments) os << '#' << c << '\n';
    for (std::size_t i = 0; i < t.header.size(); ++i) os << (i ? "," : "") << t.header[i];
    os << '\n';
    for (std::size_t r = 0; r < t.rows(); ++r) {
        for (std::size_t c = 0; c < t.columns.size(); ++c) os << (c ? "," : "") << fmt17(t.columns[c][r]);
        os << '\n';
    }
}

inline void write_csv(const std::string& path, const Table& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    write_table(f, t);
    if (!f) throw std::runtime_error("write failed: " + path);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep)) out.push_back(cur);
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

inline Table read_table(std::istream& is, bool has_header = true) {
    Table t;
    std::string line;
    bool header_done = !has_header;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            t.comments.push_back(line.substr(1));
            continue;
        }
        auto fields = split(line, ',');
        if (!header_done) {
            t.header = fields;
            t.columns.assign(fields.size(), {});
            header_done = true;
            continue;
        }
        if (t.columns.empty()) {
            for (std::size_t i = 0; i < fields.size(); ++i) t.header.push_back("c" + std::to_string(i));
            t.columns.assign(fields.size(), {});
        }
        if (fields.size() != t.columns.size())
            throw std::runtime_error("line " + std::to_string(lineno) + ": expected " +
                                     std::to_string(t.columns.size()) + " fields");
        for (std::size_t i = 0; i < fields.size(); ++i) {
            std::size_t pos = 0;
            double v = std::stod(fields[i], &pos);
            if (pos != fields[i].size())
                throw std::runtime_error("line " + std::to_string(lineno) + ": bad number '" + fields[i] + "'");
            t.columns[i].push_back(v);
        }
    }
    if (!header_done) throw std::runtime_error("empty CSV");
    return t;
}

inline Table read_csv(const std::string& path, bool has_header = true) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    return read_table(f, has_header);
}

// ----- Hamiltonian text format -----
// first line "dim unit_tag", then dim rows of "re+imj" entries

inline std::string format_complex(cplx z) {
    std::string im = fmt17(z.imag());
    if (im[0] != '-') im = "+" + im;
    return fmt17(z.real()) + im + "j";
}

inline cplx parse_complex(const std::string& s) {
    if (s.empty() || s.back() != 'j') throw std::runtime_error("bad complex entry '" + s + "'");
    // split at the last sign that is not part of an exponent
    std::size_t k = std::string::npos;
    for (std::size_t i = s.size() - 1; i > 0; --i) {
        if ((s[i] == '+' || s[i] == '-') && s[i - 1] != 'e' && s[i - 1] != 'E') {
            k = i;
            break;
        }
    }
    if (k == std::string::npos) throw std::runtime_error("bad complex entry '" + s + "'");
    std::size_t p1 = 0, p2 = 0;
    const std::string re = s.substr(0, k), im = s.substr(k, s.size() - k - 1);
    double a = std::stod(re, &p1), b = std::stod(im, &p2);
    if (p1 != re.size() || p2 != im.size()) throw std::runtime_error("bad complex entry '" + s + "'");
    return {a, b};
}

inline void write_hamiltonian(std::ostream& os, const HamiltonianMatrix& h) {
    os << h.dim() << ' ' << to_string(h.unit) << '\n';
    for (Eigen::Index i = 0; i < h.dim(); ++i) {
        for (Eigen::Index j = 0; j < h.dim(); ++j) os << (j ? " " : "") << format_complex(h.elements(i, j));
        os << '\n';
    }
}

inline HamiltonianMatrix read_hamiltonian(std::istream& is) {
    long dim = 0;
    std::string tag;
    if (!(is >> dim >> tag) || dim < 1) throw std::runtime_error("bad Hamiltonian header");
    cmat m(dim, dim);
    for (long i = 0; i < dim; ++i)
        for (long j = 0; j < dim; ++j) {
            std::string tok;
            if (!(is >> tok)) throw std::runtime_error("truncated Hamiltonian file");
            m(i, j) = parse_complex(tok);
        }
    return HamiltonianMatrix(m, unit_tag_from_string(tag));
}

inline void save_hamiltonian(const std::string& path, const HamiltonianMatrix& h) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path + " for writing");
    write_hamiltonian(f, h);
}

inline HamiltonianMatrix load_hamiltonian(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open " + path);
    return read_hamiltonian(f);
}

}  // namespace eetsim::io
