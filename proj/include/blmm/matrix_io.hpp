#pragma once

// Tab-separated matrix formats. All files accept '#'-prefixed header lines,
// parse and print doubles locale-independently (std::from_chars/to_chars at
// 17 significant digits, so finite values round-trip bit-exact).
//
//   phenotype   one value per line (n x 1)
//   covariates  n rows of q values (no intercept column; callers prepend it)
//   weights     one value per line (p x 1)
//   genotypes   one row per SNP: id, chrom:pos, maf, then n dosages
//   kinship     a sample-id header row, then the dense symmetric n x n block

#include <Eigen/Dense>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "blmm/errors.hpp"
#include "blmm/types.hpp"

namespace blmm {

enum class MatrixKind { Phenotype, Covariates, Genotypes, Kinship, Weights };

struct NamedMatrix {
    // Phenotype/covariates/weights: values as stored (samples in rows).
    // Genotypes: values is p x n, one row per SNP, plus ids/positions/mafs.
    // Kinship: values is n x n plus sample_ids.
    MatrixXd values;
    std::vector<std::string> snp_ids;
    std::vector<std::string> positions;
    VectorXd mafs;
    std::vector<std::string> sample_ids;
};

inline std::string format_double(double v) {
    if (!std::isfinite(v))
        throw_input("non-finite-entry", "refusing to write a non-finite value");
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view token, const std::string& context) {
    double v = 0.0;
    const char* begin = token.data();
    const char* end = begin + token.size();
    const auto res = std::from_chars(begin, end, v);
    if (res.ec != std::errc() || res.ptr != end)
        throw_input("parse-error", "bad numeric token '" + std::string(token) + "' in " + context);
    if (!std::isfinite(v))
        throw_input("non-finite-entry", "non-finite value in " + context);
    return v;
}

namespace detail {

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find_first_of("\t ", start);
        if (pos == std::string::npos) {
            if (start < line.size()) out.push_back(line.substr(start));
            break;
        }
        if (pos > start) out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

inline std::vector<std::vector<std::string>> read_rows(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw_input("file-not-found", "cannot open " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        rows.push_back(split_tabs(line));
    }
    return rows;
}

inline MatrixXd numeric_block(const std::vector<std::vector<std::string>>& rows,
                              std::size_t skip_cols, const std::string& path) {
    if (rows.empty()) throw_input("empty-matrix", path + " holds no data rows");
    const std::size_t cols = rows[0].size();
    if (cols <= skip_cols) throw_input("dimension-mismatch", path + " has too few columns");
    MatrixXd m(rows.size(), cols - skip_cols);
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != cols)
            throw_input("dimension-mismatch",
                        path + " row " + std::to_string(r + 1) + " has a different width");
        for (std::size_t c = skip_cols; c < cols; ++c)
            m(r, c - skip_cols) = parse_double(rows[r][c], path);
    }
    return m;
}

}  // namespace detail

inline NamedMatrix load_matrix(const std::string& path, MatrixKind kind) {
    const auto rows = detail::read_rows(path);
    NamedMatrix out;
    switch (kind) {
        case MatrixKind::Phenotype:
        case MatrixKind::Weights: {
            out.values = detail::numeric_block(rows, 0, path);
            if (out.values.cols() != 1)
                throw_input("dimension-mismatch", path + " must have exactly one column");
            break;
        }
        case MatrixKind::Covariates: {
            out.values = detail::numeric_block(rows, 0, path);
            break;
        }
        case MatrixKind::Genotypes: {
            if (rows.empty()) throw_input("empty-matrix", path + " holds no data rows");
            out.values = detail::numeric_block(rows, 3, path);
            out.mafs = VectorXd(rows.size());
            for (std::size_t r = 0; r < rows.size(); ++r) {
                out.snp_ids.push_back(rows[r][0]);
                out.positions.push_back(rows[r][1]);
                out.mafs[r] = parse_double(rows[r][2], path + " maf column");
            }
            break;
        }
        case MatrixKind::Kinship: {
            if (rows.size() < 2) throw_input("empty-matrix", path + " holds no kinship block");
            out.sample_ids = rows[0];
            const std::size_t n = out.sample_ids.size();
            std::set<std::string> seen;
            for (const auto& id : out.sample_ids)
                if (!seen.insert(id).second)
                    throw_input("duplicate-sample-id", "sample id '" + id + "' repeats in " + path);
            std::vector<std::vector<std::string>> body(rows.begin() + 1, rows.end());
            out.values = detail::numeric_block(body, 0, path);
            if (static_cast<std::size_t>(out.values.rows()) != n ||
                static_cast<std::size_t>(out.values.cols()) != n)
                throw_input("dimension-mismatch", path + " kinship block is not n x n");
            break;
        }
    }
    return out;
}

inline void save_matrix(const std::string& path, MatrixKind kind, const NamedMatrix& m,
                        const std::vector<std::string>& header_comments = {}) {
    if (m.values.size() == 0) throw_input("empty-matrix", "refusing to write an empty matrix");
    std::ofstream outf(path);
    if (!outf) throw_input("file-not-found", "cannot write " + path);
    for (const auto& c : header_comments) outf << "# " << c << "\n";
    switch (kind) {
        case MatrixKind::Phenotype:
        case MatrixKind::Weights:
        case MatrixKind::Covariates: {
            for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
                for (Eigen::Index c = 0; c < m.values.cols(); ++c)
                    outf << (c ? "\t" : "") << format_double(m.values(r, c));
                outf << "\n";
            }
            break;
        }
        case MatrixKind::Genotypes: {
            if (static_cast<Eigen::Index>(m.snp_ids.size()) != m.values.rows() ||
                m.mafs.size() != m.values.rows())
                throw_input("dimension-mismatch", "genotype metadata does not match the rows");
            for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
                outf << m.snp_ids[r] << "\t"
                     << (static_cast<Eigen::Index>(m.positions.size()) > r ? m.positions[r]
                                                                            : "?:?")
                     << "\t" << format_double(m.mafs[r]);
                for (Eigen::Index c = 0; c < m.values.cols(); ++c)
                    outf << "\t" << format_double(m.values(r, c));
                outf << "\n";
            }
            break;
        }
        case MatrixKind::Kinship: {
            if (static_cast<Eigen::Index>(m.sample_ids.size()) != m.values.rows() ||
                m.values.rows() != m.values.cols())
                throw_input("dimension-mismatch", "kinship ids do not match the block");
            for (std::size_t i = 0; i < m.sample_ids.size(); ++i)
                outf << (i ? "\t" : "") << m.sample_ids[i];
            outf << "\n";
            for (Eigen::Index r = 0; r < m.values.rows(); ++r) {
                for (Eigen::Index c = 0; c < m.values.cols(); ++c)
                    outf << (c ? "\t" : "") << format_double(m.values(r, c));
                outf << "\n";
            }
            break;
        }
    }
    if (!outf) throw_input("io-error", "write to " + path + " failed");
}

}  // namespace blmm
