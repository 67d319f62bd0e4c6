#pragma once

// Brute-force reference implementations shared by the unit and acceptance
// tests. Deliberately naive: quadratic loops, no sorting tricks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include <unistd.h>

namespace oracle {

inline std::int64_t misclassified(const std::vector<double>& h, const std::vector<double>& f, double t) {
    std::int64_t n = 0;
    for (double x : h) n += x > t ? 1 : 0;
    for (double x : f) n += x < t ? 1 : 0;
    return n;
}

struct Threshold {
    double t = 0.0;
    std::int64_t objective = 0;
};

// Every midpoint of distinct pooled scores plus both sentinels; largest minimiser.
inline Threshold best_threshold(const std::vector<double>& h, const std::vector<double>& f) {
    std::set<double> pooled(h.begin(), h.end());
    pooled.insert(f.begin(), f.end());
    std::vector<double> v(pooled.begin(), pooled.end());
    std::vector<double> cands{v.front() - 1.0, v.back() + 1.0};
    for (std::size_t i = 0; i + 1 < v.size(); ++i) cands.push_back((v[i] + v[i + 1]) / 2.0);
    Threshold best{0.0, std::numeric_limits<std::int64_t>::max()};
    for (double c : cands) {
        const auto obj = misclassified(h, f, c);
        if (obj < best.objective || (obj == best.objective && c > best.t)) best = {c, obj};
    }
    return best;
}

inline double ratio(const std::set<std::string>& m, const std::set<std::string>& c) {
    std::size_t hit = 0;
    for (const auto& x : c) {
        for (const auto& y : m) hit += x == y ? 1 : 0;
    }
    return static_cast<double>(hit) / static_cast<double>(c.size());
}

inline double jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
    std::size_t inter = 0;
    for (const auto& x : a) inter += b.count(x);
    return static_cast<double>(inter) / static_cast<double>(a.size() + b.size() - inter);
}

inline std::filesystem::path temp_dir(const std::string& tag) {
    auto p = std::filesystem::temp_directory_path() /
             ("hackaxes_" + tag + "_" + std::to_string(std::hash<std::string>{}(tag + std::to_string(::getpid()))));
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace oracle
