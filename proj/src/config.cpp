#include "sfis/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace sfis {

namespace {

std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "model.name",
        // rough_langevin
        "model.params.D", "model.params.q_amp", "model.params.v_curv", "model.params.lambda",
        // fast_vol
        "model.params.sigma0", "model.params.sigma_amp", "model.params.m_level",
        "model.params.rho", "model.params.h_amp", "model.params.periodic_surrogate",
        "model.params.surrogate_amp",
        "regime.tag", "regime.gamma", "regime.exponent_a",
        "solver.n", "solver.p",
        "sim.epsilon", "sim.eps_list", "sim.t0", "sim.T", "sim.c_fast", "sim.dt_cap",
        "sim.n_paths", "sim.seed", "sim.x0", "sim.y0",
        "subsolution.type", "subsolution.a", "subsolution.b_T", "subsolution.table",
        "functional.type", "functional.h", "functional.center", "functional.scale",
        "functional.set", "functional.box_lo", "functional.box_hi", "functional.normal",
        "functional.offset",
        "domain.lo", "domain.hi", "domain.nt", "domain.nx",
        "quasipotential.method", "quasipotential.box_lo", "quasipotential.box_hi",
        "quasipotential.nodes", "quasipotential.multistarts",
        "bound.compute",
        "output.dir", "output.per_path",
        "threads", "verify.tol",
    };
    return keys;
}

} // namespace

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

RunConfig RunConfig::parse_string(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected 'key = value'", lineno);
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("empty key", lineno);
        if (cfg.kv_.count(key)) throw ConfigError("duplicate key '" + key + "'", lineno);
        cfg.kv_[key] = val;
        cfg.lines_[key] = lineno;
    }
    cfg.validate_schema();
    return cfg;
}

void RunConfig::validate_schema() const {
    for (const auto& [key, _] : kv_)
        if (!known_keys().count(key))
            throw ConfigError("unknown key '" + key + "'", lines_.at(key));
}

bool RunConfig::has(const std::string& key) const { return kv_.count(key) > 0; }

std::string RunConfig::get_string(const std::string& key) const {
    auto it = kv_.find(key);
    if (it == kv_.end()) throw ConfigError("missing required key '" + key + "'");
    return it->second;
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
    auto it = kv_.find(key);
    return it == kv_.end() ? fallback : it->second;
}

double RunConfig::get_double(const std::string& key) const {
    const std::string s = get_string(key);
    try {
        size_t pos = 0;
        const double v = std::stod(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (...) {
        throw ConfigError("key '" + key + "': expected a number, got '" + s + "'",
                          lines_.count(key) ? lines_.at(key) : -1);
    }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    return has(key) ? get_double(key) : fallback;
}

long RunConfig::get_long(const std::string& key) const {
    const std::string s = get_string(key);
    try {
        size_t pos = 0;
        const long v = std::stol(s, &pos);
        if (pos != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (...) {
        throw ConfigError("key '" + key + "': expected an integer, got '" + s + "'",
                          lines_.count(key) ? lines_.at(key) : -1);
    }
}

long RunConfig::get_long(const std::string& key, long fallback) const {
    return has(key) ? get_long(key) : fallback;
}

bool RunConfig::get_bool(const std::string& key, bool fallback) const {
    if (!has(key)) return fallback;
    std::string s = get_string(key);
    std::transform(s.begin(), s.end(), s.begin(), ::tolower);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw ConfigError("key '" + key + "': expected a boolean", lines_.at(key));
}

std::vector<double> RunConfig::get_list(const std::string& key) const {
    const std::string s = get_string(key);
    std::vector<double> out;
    std::istringstream in(s);
    std::string tok;
    while (std::getline(in, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        try {
            out.push_back(std::stod(tok));
        } catch (...) {
            throw ConfigError("key '" + key + "': bad list element '" + tok + "'",
                              lines_.count(key) ? lines_.at(key) : -1);
        }
    }
    if (out.empty()) throw ConfigError("key '" + key + "': empty list");
    return out;
}

Eigen::VectorXd RunConfig::get_vector(const std::string& key,
                                      const Eigen::VectorXd& fallback) const {
    if (!has(key)) return fallback;
    const auto lst = get_list(key);
    Eigen::VectorXd v(lst.size());
    for (size_t i = 0; i < lst.size(); ++i) v[i] = lst[i];
    return v;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (!known_keys().count(key)) throw ConfigError("unknown key '" + key + "'");
    kv_[key] = value;
}

} // namespace sfis
