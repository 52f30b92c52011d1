#include "wscos/pgm.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>

#include "wscos/errors.hpp"

namespace wscos {

namespace {

int read_pnm_token(std::istream& in, const std::string& path) {
    // Skips whitespace and '#' comments, then parses one unsigned integer.
    int c = in.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = in.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = in.get();
    }
    if (c == EOF || !std::isdigit(c)) throw FormatError(path + ": malformed PGM header");
    long value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        if (value > 1 << 30) throw FormatError(path + ": header value out of range");
        c = in.get();
    }
    if (c != EOF) in.unget();
    return static_cast<int>(value);
}

}  // namespace

void write_pgm(const std::filesystem::path& path, const Grid& g) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot open for writing: " + path.string());
    out << "P5\n" << g.cols << " " << g.rows << "\n255\n";
    std::vector<std::uint8_t> bytes(g.size());
    for (size_t i = 0; i < g.size(); ++i) {
        double x = g.v[i];
        if (x < 0.0) x = 0.0;
        if (x > 1.0) x = 1.0;
        bytes[i] = static_cast<std::uint8_t>(std::lround(x * 255.0));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write: " + path.string());
}

Grid read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("missing file: " + path.string());
    char magic[2] = {0, 0};
    in.read(magic, 2);
    if (!in || magic[0] != 'P' || magic[1] != '5') throw FormatError(path.string() + ": not a P5 PGM");
    const int cols = read_pnm_token(in, path.string());
    const int rows = read_pnm_token(in, path.string());
    const int maxval = read_pnm_token(in, path.string());
    if (maxval != 255) throw FormatError(path.string() + ": unsupported maxval " + std::to_string(maxval));
    if (rows <= 0 || cols <= 0) throw FormatError(path.string() + ": bad dims");
    in.get();  // single whitespace byte after maxval
    Grid g(rows, cols);
    std::vector<std::uint8_t> bytes(g.size());
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!in) throw FormatError(path.string() + ": truncated pixel data");
    for (size_t i = 0; i < g.size(); ++i) g.v[i] = static_cast<double>(bytes[i]) / 255.0;
    return g;
}

Grid quantize_u8(const Grid& g) {
    Grid out(g.rows, g.cols);
    for (size_t i = 0; i < g.size(); ++i) {
        double x = g.v[i];
        if (x < 0.0) x = 0.0;
        if (x > 1.0) x = 1.0;
        out.v[i] = static_cast<double>(std::lround(x * 255.0)) / 255.0;
    }
    return out;
}

}  // namespace wscos
