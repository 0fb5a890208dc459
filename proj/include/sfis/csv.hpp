#pragma once

#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "sfis/error.hpp"

namespace sfis {

/// Minimal CSV writer: header row then numeric rows, %.17g so that identical
/// doubles always serialize identically.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header) : out_(path) {
        if (!out_) throw Error(Error::Kind::Domain, "cannot open output file " + path);
        for (size_t i = 0; i < header.size(); ++i)
            out_ << (i ? "," : "") << header[i];
        out_ << "\n";
    }

    void row(const std::vector<double>& values) {
        char buf[40];
        for (size_t i = 0; i < values.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.17g", values[i]);
            out_ << (i ? "," : "") << buf;
        }
        out_ << "\n";
    }

    void row_kv(const std::string& key, double value) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", value);
        out_ << key << "," << buf << "\n";
    }

    void row_kv(const std::string& key, const std::string& value) {
        out_ << key << "," << value << "\n";
    }

private:
    std::ofstream out_;
};

} // namespace sfis
