#pragma once

// Tabular and JSON emission for the command-line tool.
//
// Every number is written with 17 significant digits ("%.17g"), which
// round-trips IEEE doubles, so equal inputs give byte-identical files.
// Column orders:
//
//   snapshots.csv    step, agent_id, wealth
//   summary.csv      step, gini, mean, m2
//   density.csv      time, w, P                 (time-dependent solver)
//   moments.csv      time, N, W, boundary_flux_lo, boundary_flux_hi
//   density.csv      w, P, A, B, residual       (stationary solver)
//   iterations.csv   iter, l1_change, residual_norm
//
// The same tables can be written as JSON objects {"columns": [...],
// "rows": [[...], ...]}. Requires nlohmann/json.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "yardsale/analysis.hpp"
#include "yardsale/errors.hpp"

namespace yardsale::io {

class IoError : public Error {
public:
    using Error::Error;
};

enum class Format { csv, json };

inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Row-streaming writer for one numeric table.
class TableWriter {
public:
    TableWriter(const std::string& path, std::vector<std::string> columns, Format format)
        : out_(path, std::ios::binary), columns_(std::move(columns)), format_(format) {
        if (!out_) throw IoError("cannot open " + path + " for writing");
        if (format_ == Format::csv) {
            for (std::size_t i = 0; i < columns_.size(); ++i) out_ << (i ? "," : "") << columns_[i];
            out_ << '\n';
        } else {
            out_ << "{\"columns\":[";
            for (std::size_t i = 0; i < columns_.size(); ++i) out_ << (i ? "," : "") << '"' << columns_[i] << '"';
            out_ << "],\"rows\":[";
        }
    }

    TableWriter(const TableWriter&) = delete;
    TableWriter& operator=(const TableWriter&) = delete;
    ~TableWriter() {
        try {
            close();
        } catch (...) {
        }
    }

    void row(std::initializer_list<double> values) {
        if (values.size() != columns_.size()) throw IoError("row width does not match the header");
        if (format_ == Format::csv) {
            bool first = true;
            for (double v : values) {
                out_ << (first ? "" : ",") << format_double(v);
                first = false;
            }
            out_ << '\n';
        } else {
            out_ << (rows_ ? ",[" : "[");
            bool first = true;
            for (double v : values) {
                out_ << (first ? "" : ",") << (std::isfinite(v) ? format_double(v) : "null");
                first = false;
            }
            out_ << ']';
        }
        ++rows_;
    }

    void close() {
        if (closed_) return;
        closed_ = true;
        if (format_ == Format::json) out_ << "]}\n";
        out_.flush();
        if (!out_) throw IoError("write failed");
    }

private:
    std::ofstream out_;
    std::vector<std::string> columns_;
    Format format_;
    std::size_t rows_ = 0;
    bool closed_ = false;
};

inline std::string table_name(const std::string& stem, Format format) {
    return stem + (format == Format::csv ? ".csv" : ".json");
}

inline nlohmann::ordered_json to_json(const ParetoFit& fit) {
    nlohmann::ordered_json j;
    j["alpha"] = fit.alpha;
    j["w_min"] = fit.w_min;
    j["window"] = {fit.window.lo, fit.window.hi};
    j["r2"] = fit.r2;
    j["stderr"] = fit.stderr_alpha;
    j["method"] = fit.method;
    j["points_used"] = fit.points_used;
    j["points_excluded"] = fit.points_excluded;
    return j;
}

/// Hill estimate in the ParetoFit layout; the window runs from the
/// threshold to the sample maximum and r2 is null.
inline nlohmann::ordered_json to_json(const HillEstimate& est, double sample_max) {
    nlohmann::ordered_json j;
    j["alpha"] = est.alpha;
    j["w_min"] = est.threshold;
    j["window"] = {est.threshold, sample_max};
    j["r2"] = nullptr;
    j["stderr"] = est.stderr_alpha;
    j["method"] = "hill";
    j["k"] = est.k;
    return j;
}

inline void write_json(const std::string& path, const nlohmann::ordered_json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

/// Numeric CSV with a header row.
struct CsvTable {
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;

    std::ptrdiff_t column(const std::string& name) const {
        for (std::size_t i = 0; i < columns.size(); ++i)
            if (columns[i] == name) return static_cast<std::ptrdiff_t>(i);
        return -1;
    }
};

inline CsvTable read_csv(std::istream& in, const std::string& label = "input") {
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw IoError(label + ": empty file");
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
            t.columns.push_back(cell);
        }
    }
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
            } catch (const std::exception&) {
                throw IoError(label + ": line " + std::to_string(lineno) + ": not a number: '" + cell + "'");
            }
        }
        if (row.size() != t.columns.size())
            throw IoError(label + ": line " + std::to_string(lineno) + ": expected " +
                          std::to_string(t.columns.size()) + " fields");
        t.rows.push_back(std::move(row));
    }
    return t;
}

inline CsvTable read_csv_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return read_csv(in, path);
}

}  // namespace yardsale::io
