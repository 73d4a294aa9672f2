#include "mds/nt1.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "mds/errors.hpp"

namespace mds {

std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

static void write_nt1_block(std::ostream& os, const Tensor& t) {
    os << "NT1\n";
    for (std::size_t i = 0; i < t.shape.size(); ++i) {
        os << (i ? " " : "") << t.shape[i];
    }
    os << "\n";
    int row = t.shape.empty() ? 1 : t.shape.back();
    std::int64_t n = t.numel();
    for (std::int64_t i = 0; i < n; ++i) {
        os << format_full(t.data[static_cast<std::size_t>(i)]);
        os << (((i + 1) % row == 0) ? '\n' : ' ');
    }
}

static Tensor read_nt1_block(std::istream& is, const std::string& where) {
    std::string magic;
    if (!(is >> magic) || magic != "NT1") {
        throw DataError(where + ": missing NT1 magic");
    }
    std::string rest;
    std::getline(is, rest);
    std::string shape_line;
    if (!std::getline(is, shape_line)) {
        throw DataError(where + ": missing shape line");
    }
    std::istringstream ss(shape_line);
    std::vector<int> shape;
    int e;
    while (ss >> e) {
        shape.push_back(e);
    }
    if (shape.empty()) {
        throw DataError(where + ": empty shape line");
    }
    Tensor t(shape);
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        if (!(is >> t.data[i])) {
            throw DataError(where + ": truncated value stream");
        }
    }
    return t;
}

void save_nt1(const std::string& path, const Tensor& t) {
    std::ofstream os(path);
    if (!os) {
        throw DataError("cannot open for write: " + path);
    }
    write_nt1_block(os, t);
    if (!os) {
        throw DataError("write failed: " + path);
    }
}

Tensor load_nt1(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw DataError("cannot open: " + path);
    }
    return read_nt1_block(is, path);
}

void save_checkpoint(const std::string& path,
                     const std::vector<std::pair<std::string, const Tensor*>>& entries) {
    std::ofstream os(path);
    if (!os) {
        throw DataError("cannot open for write: " + path);
    }
    for (const auto& [name, tensor] : entries) {
        os << name << "\n";
        write_nt1_block(os, *tensor);
    }
    if (!os) {
        throw DataError("write failed: " + path);
    }
}

std::vector<std::pair<std::string, Tensor>> load_checkpoint(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw DataError("cannot open: " + path);
    }
    std::vector<std::pair<std::string, Tensor>> out;
    std::string name;
    while (is >> name) {
        out.emplace_back(name, read_nt1_block(is, path + ":" + name));
    }
    return out;
}

}  // namespace mds
