#pragma once

#include <Eigen/Dense>
#include <map>
#include <string>
#include <vector>

#include "sfis/error.hpp"

namespace sfis {

/// Flat "key = value" config with dotted section names. '#' starts a comment.
/// Keys are validated against the known schema up front; unknown or duplicate
/// keys are rejected with their line number.
class RunConfig {
public:
    static RunConfig parse_file(const std::string& path);
    static RunConfig parse_string(const std::string& text);

    bool has(const std::string& key) const;
    std::string get_string(const std::string& key) const;
    std::string get_string(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key) const;
    double get_double(const std::string& key, double fallback) const;
    long get_long(const std::string& key) const;
    long get_long(const std::string& key, long fallback) const;
    bool get_bool(const std::string& key, bool fallback) const;
    std::vector<double> get_list(const std::string& key) const;
    Eigen::VectorXd get_vector(const std::string& key, const Eigen::VectorXd& fallback) const;

    void set(const std::string& key, const std::string& value); // CLI overrides

private:
    void validate_schema() const;
    std::map<std::string, std::string> kv_;
    std::map<std::string, int> lines_;
};

} // namespace sfis
