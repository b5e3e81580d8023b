#include "chamber/io/image.hpp"

#include <fstream>
#include <stdexcept>

namespace chamber::io {

void write_pgm(const std::string& path, const uint8_t* pixels, int width, int height) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write image: " + path);
    os << "P5\n" << width << " " << height << "\n255\n";
    os.write(reinterpret_cast<const char*>(pixels), std::streamsize(width) * height);
    if (!os) throw std::runtime_error("image write failed: " + path);
}

void write_ppm(const std::string& path, const uint8_t* rgb, int width, int height) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write image: " + path);
    os << "P6\n" << width << " " << height << "\n255\n";
    os.write(reinterpret_cast<const char*>(rgb), std::streamsize(width) * height * 3);
    if (!os) throw std::runtime_error("image write failed: " + path);
}

std::vector<uint8_t> read_pgm(const std::string& path, int& width, int& height) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read image: " + path);
    std::string magic;
    int maxval = 0;
    is >> magic >> width >> height >> maxval;
    if (magic != "P5" || maxval != 255)
        throw std::runtime_error(path + ": expected 8-bit binary PGM");
    is.get(); // single whitespace after header
    std::vector<uint8_t> pixels(size_t(width) * size_t(height));
    is.read(reinterpret_cast<char*>(pixels.data()), std::streamsize(pixels.size()));
    if (!is) throw std::runtime_error(path + ": truncated image");
    return pixels;
}

} // namespace chamber::io
