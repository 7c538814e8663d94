#include "openrgbt/image_io.hpp"

#include <png.h>

#include <cstring>
#include <fstream>
#include <iterator>

#include "openrgbt/error.hpp"

namespace openrgbt {

namespace {

struct ReadCursor {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

[[noreturn]] void on_png_error(png_structp png, png_const_charp message) {
    // libpng requires this handler not to return; longjmp back to the caller.
    auto* text = static_cast<std::string*>(png_get_error_ptr(png));
    if (text != nullptr) {
        *text = message;
    }
    png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

void read_from_cursor(png_structp png, png_bytep out, png_size_t length) {
    auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cursor->offset + length > cursor->bytes.size()) {
        png_error(png, "truncated PNG stream");
    }
    std::memcpy(out, cursor->bytes.data() + cursor->offset, length);
    cursor->offset += length;
}

void append_to_vector(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void flush_noop(png_structp) {}

} // namespace

DecodedImage decode_png_any(std::span<const std::uint8_t> bytes, bool palette_as_index) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw IoError("not a PNG stream");
    }
    std::string error_text;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &error_text, on_png_error, on_png_warning);
    if (png == nullptr) {
        throw IoError("png_create_read_struct failed");
    }
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png_create_info_struct failed");
    }

    ReadCursor cursor{bytes, 0};
    DecodedImage image;
    std::vector<png_bytep> rows;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("PNG decode failed: " + error_text);
    }

    png_set_read_fn(png, &cursor, read_from_cursor);
    png_read_info(png, info);

    const png_byte color_type = png_get_color_type(png, info);
    const png_byte bit_depth = png_get_bit_depth(png, info);

    if (bit_depth == 16) {
        png_set_strip_16(png);
    }
    if (color_type == PNG_COLOR_TYPE_PALETTE) {
        if (palette_as_index) {
            if (bit_depth < 8) {
                png_set_packing(png);
            }
        } else {
            png_set_palette_to_rgb(png);
            if (png_get_valid(png, info, PNG_INFO_tRNS)) {
                png_set_tRNS_to_alpha(png);
            }
        }
    } else if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    png_read_update_info(png, info);

    image.width = static_cast<int>(png_get_image_width(png, info));
    image.height = static_cast<int>(png_get_image_height(png, info));
    image.channels = png_get_channels(png, info);
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    image.samples.resize(row_bytes * image.height);
    rows.resize(image.height);
    for (int y = 0; y < image.height; ++y) {
        rows[y] = image.samples.data() + y * row_bytes;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    if (row_bytes != static_cast<std::size_t>(image.width) * image.channels) {
        throw IoError("unsupported PNG sample layout");
    }
    return image;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("short write to " + path.string());
    }
}

DecodedImage read_png_any(const std::filesystem::path& path, bool palette_as_index) {
    const auto bytes = read_file_bytes(path);
    try {
        return decode_png_any(bytes, palette_as_index);
    } catch (const IoError& e) {
        throw IoError(path.string() + ": " + e.what());
    }
}

Raster drop_alpha(const DecodedImage& image) {
    const int keep = image.channels >= 3 ? 3 : 1;
    if (keep == image.channels) {
        return Raster(image.width, image.height, keep, image.samples);
    }
    std::vector<std::uint8_t> out;
    out.reserve(static_cast<std::size_t>(image.width) * image.height * keep);
    for (std::size_t i = 0; i < image.samples.size(); i += image.channels) {
        out.insert(out.end(), image.samples.begin() + i, image.samples.begin() + i + keep);
    }
    return Raster(image.width, image.height, keep, std::move(out));
}

Raster read_png(const std::filesystem::path& path) { return drop_alpha(read_png_any(path)); }

Raster decode_png(std::span<const std::uint8_t> bytes) { return drop_alpha(decode_png_any(bytes)); }

Raster read_label_png(const std::filesystem::path& path) {
    DecodedImage image = read_png_any(path, true);
    if (image.channels != 1) {
        throw IoError(path.string() + ": label map must be single-channel, got " +
                      std::to_string(image.channels) + " channels");
    }
    return Raster(image.width, image.height, 1, std::move(image.samples));
}

std::vector<std::uint8_t> encode_png(const Raster& raster) {
    if (raster.empty()) {
        throw InvalidInput("cannot encode an empty raster");
    }
    std::string error_text;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &error_text, on_png_error, on_png_warning);
    if (png == nullptr) {
        throw IoError("png_create_write_struct failed");
    }
    png_infop info = png_create_info_struct(png);
    if (info == nullptr) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png_create_info_struct failed");
    }

    std::vector<std::uint8_t> out;
    std::vector<png_bytep> rows(raster.height());

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encode failed: " + error_text);
    }

    png_set_write_fn(png, &out, append_to_vector, flush_noop);
    png_set_IHDR(png, info, raster.width(), raster.height(), 8,
                 raster.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 3);
    png_write_info(png, info);
    const std::size_t row_bytes = static_cast<std::size_t>(raster.width()) * raster.channels();
    // libpng's row pointer type is non-const even for writing.
    auto* base = const_cast<std::uint8_t*>(raster.samples().data());
    for (int y = 0; y < raster.height(); ++y) {
        rows[y] = base + y * row_bytes;
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

void write_png(const std::filesystem::path& path, const Raster& raster) {
    write_file_bytes(path, encode_png(raster));
}

} // namespace openrgbt
