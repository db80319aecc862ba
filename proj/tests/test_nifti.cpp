#include "doctest.h"

#include <cstring>
#include <fstream>
#include <iterator>
#include <random>

#include "strokeval/error.hpp"
#include "strokeval/nifti.hpp"
#include "support/synth.hpp"

using namespace strokeval;

namespace {

std::vector<char> slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void spit(const std::filesystem::path& p, const std::vector<char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<double> random_samples(Datatype type, std::size_t n, std::mt19937_64& rng) {
    std::vector<double> v(n);
    for (auto& x : v) {
        switch (type) {
            case Datatype::UInt8: x = static_cast<double>(rng() % 256); break;
            case Datatype::Int16: x = static_cast<double>(static_cast<std::int16_t>(rng())); break;
            case Datatype::Int32: x = static_cast<double>(static_cast<std::int32_t>(rng())); break;
            case Datatype::Float32: x = static_cast<double>(std::uniform_real_distribution<float>(-1e3f, 1e3f)(rng)); break;
            case Datatype::Float64: x = std::normal_distribution<double>(0, 1e6)(rng); break;
        }
    }
    return v;
}


}  // namespace

TEST_SUITE("nifti_io") {

TEST_CASE("header size 348 decodes little-endian; a fully byte-swapped header decodes identically") {
    VolumeHeader h = VolumeHeader::make(Grid{{7, 5, 3}, {0.9, 1.1, 5.0}}, Datatype::Int16);
    h.sform_code = 1;
    h.srow_x = {0.9f, 0.f, 0.f, -90.f};
    h.srow_y = {0.f, 1.1f, 0.f, -120.f};
    h.srow_z = {0.f, 0.f, 5.f, -60.f};
    h.descrip = {'l', 'e', 's', 'i', 'o', 'n'};
    h.extension.clear();

    const auto little = encode_header(h);
    CHECK(little[0] == std::byte{0x5c});  // 348 = 0x015c
    CHECK(little[1] == std::byte{0x01});
    const auto decoded_little = decode_header(little);
    CHECK(decoded_little.endianness == Endianness::Little);

    VolumeHeader big_h = h;
    big_h.endianness = Endianness::Big;
    const auto big = encode_header(big_h);
    CHECK(big[3] == std::byte{0x5c});
    CHECK(big[2] == std::byte{0x01});
    auto decoded_big = decode_header(big);
    CHECK(decoded_big.endianness == Endianness::Big);
    decoded_big.endianness = Endianness::Little;
    CHECK(decoded_big == decoded_little);
    CHECK(decoded_little == h);
}

TEST_CASE("voxel volume is the product of spacings in ml") {
    CHECK(VolumeHeader::make(Grid{{4, 4, 4}, {2, 2, 2}}, Datatype::UInt8).voxel_volume_ml() == doctest::Approx(0.008).epsilon(1e-15));
    CHECK(Grid{{1, 1, 1}, {1, 1, 1}}.voxel_volume_ml() == 0.001);
    CHECK(Grid{{1, 1, 1}, {0.5, 2.0, 3.0}}.voxel_volume_ml() == doctest::Approx(0.003));
}

TEST_CASE("write then read is byte-exact for every datatype, byte order and container") {
    synth::TempDir dir;
    std::mt19937_64 rng(42);
    const Datatype types[] = {Datatype::UInt8, Datatype::Int16, Datatype::Int32, Datatype::Float32, Datatype::Float64};
    const char* suffixes[] = {".nii", ".nii.gz", ".hdr", ".hdr.gz"};
    int k = 0;
    for (const auto type : types) {
        for (const auto order : {Endianness::Little, Endianness::Big}) {
            for (const char* sfx : suffixes) {
                CAPTURE(static_cast<int>(type));
                CAPTURE(sfx);
                VolumeHeader h = VolumeHeader::make(Grid{{6, 5, 4}, {1.0, 1.5, 3.0}}, type);
                h.endianness = order;
                const auto samples = random_samples(type, h.voxel_count(), rng);

                const auto first = dir / ("a" + std::to_string(k) + sfx);
                const auto second = dir / ("b" + std::to_string(k) + sfx);
                ++k;
                write_volume(h, samples, first);
                const Volume back = read_volume(first);
                CHECK(back.header.endianness == order);
                CHECK(back.header.datatype == type);
                CHECK(back.header.dim == h.dim);
                CHECK(back.header.pixdim == h.pixdim);
                CHECK(back.header.affine() == h.affine());
                CHECK(back.stored == samples);

                write_volume(back, second);
                CHECK(slurp(first) == slurp(second));
                const std::string s = first.string();
                if (s.ends_with(".hdr") || s.ends_with(".hdr.gz")) {
                    auto img = [](std::filesystem::path p) {
                        std::string t = p.string();
                        return std::filesystem::path(t.replace(t.find(".hdr"), 4, ".img"));
                    };
                    CHECK(slurp(img(first)) == slurp(img(second)));
                }
            }
        }
    }
}

TEST_CASE("gzip suffix produces a gzip stream") {
    synth::TempDir dir;
    VoxelMask m(synth::cube(4));
    m.set(1, 2, 3, true);
    write_mask(m, dir / "m.nii.gz");
    const auto bytes = slurp(dir / "m.nii.gz");
    REQUIRE(bytes.size() > 2);
    CHECK(static_cast<unsigned char>(bytes[0]) == 0x1f);
    CHECK(static_cast<unsigned char>(bytes[1]) == 0x8b);
    const auto back = read_mask(dir / "m.nii.gz");
    CHECK(back.foreground_count() == 1);
    CHECK(back.at(1, 2, 3));
}

TEST_CASE("u8 mask write then read is equal") {
    synth::TempDir dir;
    std::mt19937_64 rng(7);
    const auto m = synth::random_mask(Grid{{9, 8, 7}, {0.8, 0.8, 2.0}}, 0.3, rng);
    write_mask(m, dir / "m.nii");
    const auto back = read_mask(dir / "m.nii");
    CHECK(std::equal(m.voxels().begin(), m.voxels().end(), back.voxels().begin(), back.voxels().end()));
    CHECK(same_grid(m.grid(), back.grid()));
}

TEST_CASE("read_mask binarization contract") {
    synth::TempDir dir;
    const Grid g{{3, 3, 3}, {1, 1, 1}};
    VolumeHeader h = VolumeHeader::make(g, Datatype::Float32);

    SUBCASE("all-zero volume gives an empty mask") {
        write_volume(h, std::vector<double>(27, 0.0), dir / "z.nii");
        CHECK(read_mask(dir / "z.nii").foreground_count() == 0);
    }
    SUBCASE("values {0, 1} are kept") {
        std::vector<double> v(27, 0.0);
        v[4] = v[13] = 1.0;
        write_volume(h, v, dir / "b.nii");
        const auto m = read_mask(dir / "b.nii");
        CHECK(m.foreground_count() == 2);
        CHECK(m[4] == 1);
        CHECK(m[13] == 1);
    }
    SUBCASE("values within tolerance snap") {
        std::vector<double> v(27, 0.0);
        v[0] = 0.9995;
        v[1] = 0.0004;
        write_volume(h, v, dir / "t.nii");
        const auto m = read_mask(dir / "t.nii");
        CHECK(m[0] == 1);
        CHECK(m[1] == 0);
    }
    SUBCASE("a 0.4 sample is a NonBinaryMask error") {
        std::vector<double> v(27, 0.0);
        v[5] = 0.4;
        write_volume(h, v, dir / "p.nii");
        try {
            (void)read_mask(dir / "p.nii", 1e-3);
            FAIL("expected NonBinaryMask");
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::NonBinaryMask);
        }
    }
    SUBCASE("scaling is applied before binarization") {
        VolumeHeader hs = VolumeHeader::make(g, Datatype::Int16);
        hs.scl_slope = 0.5f;
        std::vector<double> v(27, 0.0);
        v[3] = 2.0;  // scaled to 1.0
        write_volume(hs, v, dir / "s.nii");
        const auto vol = read_volume(dir / "s.nii");
        CHECK(vol.stored[3] == 2.0);
        CHECK(vol.values()[3] == 1.0);
        CHECK(read_mask(dir / "s.nii")[3] == 1);
    }
}

TEST_CASE("malformed files are rejected with specific errors") {
    synth::TempDir dir;
    const Grid g{{4, 4, 4}, {1, 1, 1}};
    write_volume(VolumeHeader::make(g, Datatype::Int16), std::vector<double>(64, 1.0), dir / "ok.nii");
    const auto good = slurp(dir / "ok.nii");

    auto expect = [&](const std::vector<char>& bytes, ErrorCode code) {
        spit(dir / "bad.nii", bytes);
        try {
            (void)read_volume(dir / "bad.nii");
            FAIL("expected an error");
        } catch (const Error& e) {
            CHECK(e.code() == code);
        }
    };

    SUBCASE("bad magic") {
        auto b = good;
        b[344] = 'x';
        expect(b, ErrorCode::BadMagic);
    }
    SUBCASE("unsupported datatype (uint16 = 512)") {
        auto b = good;
        b[70] = 0x00;
        b[71] = 0x02;
        expect(b, ErrorCode::UnsupportedDatatype);
    }
    SUBCASE("truncated payload") {
        auto b = good;
        b.resize(b.size() - 3);
        expect(b, ErrorCode::TruncatedPayload);
    }
    SUBCASE("non-positive pixdim") {
        VolumeHeader h = VolumeHeader::make(g, Datatype::Int16);
        h.pixdim[2] = 0.0f;
        auto hdr = encode_header(h);
        auto b = good;
        std::memcpy(b.data(), hdr.data(), hdr.size());
        expect(b, ErrorCode::NonPositivePixdim);
    }
    SUBCASE("header size field wrong") {
        auto b = good;
        b[0] = 0x10;
        expect(b, ErrorCode::BadHeader);
    }
    SUBCASE("4-D with more than one frame") {
        VolumeHeader h = VolumeHeader::make(g, Datatype::Int16);
        h.dim[0] = 4;
        h.dim[4] = 2;
        auto hdr = encode_header(h);
        auto b = good;
        std::memcpy(b.data(), hdr.data(), hdr.size());
        expect(b, ErrorCode::BadHeader);
    }
}

TEST_CASE("singleton time axis is squeezed") {
    synth::TempDir dir;
    VolumeHeader h = VolumeHeader::make(Grid{{3, 2, 2}, {1, 1, 1}}, Datatype::UInt8);
    h.dim[0] = 4;
    h.dim[4] = 1;
    write_volume(h, std::vector<double>(12, 1.0), dir / "t.nii");
    const auto m = read_mask(dir / "t.nii");
    CHECK(m.grid().dims == std::array<std::int64_t, 3>{3, 2, 2});
    CHECK(m.foreground_count() == 12);
}

TEST_CASE("affine uses srow when sform_code is set, else the spacing diagonal") {
    VolumeHeader h = VolumeHeader::make(Grid{{2, 2, 2}, {2, 3, 4}}, Datatype::UInt8);
    auto a = h.affine();
    CHECK(a[0][0] == 2.0);
    CHECK(a[1][1] == 3.0);
    CHECK(a[2][2] == 4.0);
    CHECK(a[0][3] == 0.0);
    h.sform_code = 2;
    h.srow_x = {-2, 0, 0, 10};
    h.srow_y = {0, 3, 0, 20};
    h.srow_z = {0, 0, 4, 30};
    a = h.affine();
    CHECK(a[0][0] == -2.0);
    CHECK(a[2][3] == 30.0);
    CHECK(a[3][3] == 1.0);
}

TEST_CASE("writing rejects samples the datatype cannot hold") {
    synth::TempDir dir;
    const VolumeHeader h = VolumeHeader::make(Grid{{2, 1, 1}, {1, 1, 1}}, Datatype::UInt8);
    CHECK_THROWS_AS(write_volume(h, std::vector<double>{0.0, 256.0}, dir / "x.nii"), Error);
    CHECK_THROWS_AS(write_volume(h, std::vector<double>{0.5, 1.0}, dir / "x.nii"), Error);
    CHECK_THROWS_AS(write_volume(h, std::vector<double>{1.0}, dir / "x.nii"), Error);
}

}  // TEST_SUITE
