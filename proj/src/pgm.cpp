#include "mds/pgm.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

#include "mds/errors.hpp"

namespace mds {

static void check_hw(const Tensor& t) {
    if (t.ndim() != 2) {
        throw UsageError("PGM I/O expects an [H,W] tensor");
    }
}

void save_pgm(const std::string& path, const Tensor& image_hw) {
    check_hw(image_hw);
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw DataError("cannot open for write: " + path);
    }
    int h = image_hw.dim(0), w = image_hw.dim(1);
    os << "P5\n" << w << " " << h << "\n255\n";
    std::vector<std::uint8_t> row(static_cast<std::size_t>(w));
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            double v = image_hw.data[static_cast<std::size_t>(r) * w + c];
            v = std::min(1.0, std::max(0.0, v));
            row[static_cast<std::size_t>(c)] = static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
        os.write(reinterpret_cast<const char*>(row.data()), w);
    }
    if (!os) {
        throw DataError("write failed: " + path);
    }
}

Tensor load_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw DataError("cannot open: " + path);
    }
    std::string magic;
    is >> magic;
    if (magic != "P5") {
        throw DataError(path + ": not a P5 PGM");
    }
    auto next_int = [&is, &path]() {
        // skip whitespace and '#' comment lines
        int ch = is.get();
        while (ch == ' ' || ch == '\n' || ch == '\r' || ch == '\t' || ch == '#') {
            if (ch == '#') {
                while (ch != '\n' && ch != EOF) {
                    ch = is.get();
                }
            }
            ch = is.get();
        }
        int value = 0;
        bool any = false;
        while (ch >= '0' && ch <= '9') {
            value = value * 10 + (ch - '0');
            any = true;
            ch = is.get();
        }
        if (!any) {
            throw DataError(path + ": malformed PGM header");
        }
        return value;
    };
    int w = next_int();
    int h = next_int();
    int maxval = next_int();
    if (maxval != 255) {
        throw DataError(path + ": only maxval 255 supported");
    }
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h);
    is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (is.gcount() != static_cast<std::streamsize>(bytes.size())) {
        throw DataError(path + ": truncated pixel data");
    }
    Tensor t({h, w});
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        t.data[i] = static_cast<double>(bytes[i]) / 255.0;
    }
    return t;
}

void save_pgm_normalized(const std::string& path, const Tensor& map_hw) {
    check_hw(map_hw);
    double m = max_of(map_hw);
    Tensor scaled = map_hw;
    if (m > 0.0) {
        for (double& v : scaled.data) {
            v /= m;
        }
    }
    save_pgm(path, scaled);
}

}  // namespace mds
