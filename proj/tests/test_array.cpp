#include <cmath>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "semdtm/array.hpp"
#include "semdtm/error.hpp"

using namespace semdtm;

TEST_CASE("shape validation") {
    CHECK_THROWS_AS(NdArray(Shape{}, {}), ShapeError);
    CHECK_THROWS_AS(NdArray(Shape{2, 0}, {}), ShapeError);
    CHECK_THROWS_AS(NdArray(Shape{2, 2}, {1, 2, 3}), ShapeError);
    CHECK_THROWS_AS(NdArray(Shape{2}, {1, 2}, std::vector<bool>{true}), ShapeError);
    NdArray a({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(a.rank() == 2);
    CHECK(a.size() == 6);
    CHECK(a.strides() == std::vector<std::size_t>{3, 1});
    CHECK(a.unravel(4) == MultiIndex{1, 1});
    CHECK(a.ravel(MultiIndex{1, 2}) == 5);
}

TEST_CASE("masked cells are normalized and an all-false mask is dropped") {
    NdArray a({3}, {1, 2, 3}, std::vector<bool>{false, true, false});
    CHECK(a[1] == 0.0);
    CHECK(a.masked(1));
    CHECK(a.masked_count() == 1);
    NdArray b({3}, {1, 2, 3}, std::vector<bool>{false, false, false});
    CHECK_FALSE(b.has_mask());
    CHECK(b == NdArray::vector({1, 2, 3}));
}

TEST_CASE("equality is bitwise with NaN equal to NaN") {
    CHECK(NdArray::vector({NAN, 1}) == NdArray::vector({NAN, 1}));
    CHECK_FALSE(NdArray::vector({0.0}) == NdArray::vector({-0.0}));
    CHECK_FALSE(NdArray::vector({1, 2}) == NdArray::matrix({{1, 2}}));
    CHECK(NdArray::vector({1}).with_name("a") == NdArray::vector({1}).with_name("b"));
}

TEST_CASE("compare") {
    auto a = NdArray::matrix({{1, 2}, {3, 4}});
    auto b = NdArray::matrix({{1, 2.5}, {3, 3}});
    Discrepancy d = compare(a, b);
    CHECK(d.max_abs_diff == 1.0);
    CHECK(d.worst_cell == MultiIndex{1, 1});
    CHECK(d.cells_compared == 4);
    CHECK(d.mask_mismatch_count == 0);
    CHECK(d.max_rel_diff == doctest::Approx(0.25));

    CHECK(compare(a, a).max_abs_diff == 0.0);
    CHECK_THROWS_AS(compare(a, NdArray::vector({1, 2, 3, 4})), ShapeError);

    auto n = NdArray::vector({NAN, 1});
    CHECK(compare(n, n).max_abs_diff == 0.0);
    CHECK(std::isinf(compare(n, NdArray::vector({0, 1})).max_abs_diff));

    NdArray m({2}, {1, 5}, std::vector<bool>{false, true});
    auto dm = compare(m, NdArray::vector({1, 7}));
    CHECK(dm.mask_mismatch_count == 1);
    CHECK(dm.cells_compared == 1);
    CHECK(dm.max_abs_diff == 0.0);
}

TEST_CASE("number formatting round-trips") {
    for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 1e21, 123456789.0, 0.0}) {
        CHECK(parse_number(format_number(v)) == v);
    }
    CHECK(format_number(1.0) == "1");
    CHECK(format_number(0.5) == "0.5");
    CHECK(format_number(NAN) == "nan");
    CHECK(format_number(-INFINITY) == "-inf");
    CHECK(parse_number("+3") == 3.0);
    CHECK(std::isnan(*parse_number("nan")));
    CHECK_FALSE(parse_number("3x"));
    CHECK_FALSE(parse_number(""));
}

TEST_CASE("parse_grid") {
    auto a = parse_grid("ncols 3\nnrows 2\nNODATA_value -9999\n1 2 3\n4 -9999 6\n");
    CHECK(a.shape() == Shape{2, 3});
    CHECK(a.masked(4));
    CHECK(a[5] == 6.0);

    auto b = parse_grid("NCOLS 2\nNROWS 1\n0.5 1e3\n");
    CHECK_FALSE(b.has_mask());
    CHECK(b[1] == 1000.0);
}

TEST_CASE("parse_grid diagnostics carry line and column") {
    auto expect_error = [](const char* text, std::size_t line) {
        try {
            parse_grid(text);
            FAIL("no error for: " << text);
        } catch (const ParseError& e) {
            REQUIRE(e.line().has_value());
            CHECK(*e.line() == line);
            CHECK(e.column().has_value());
        }
    };
    expect_error("ncols 2\nnrows 2\n1 2\n3\n", 4);
    expect_error("ncols 2\nnrows 2\n1 2\n3 x\n", 4);
    expect_error("ncols 2\nnrows 1\n1 2\n3 4\n", 4);
    expect_error("ncols 2\nnrows 3\n1 2\n", 4);
    expect_error("ncols 0\nnrows 1\n", 1);
    expect_error("nrows 1\n1\n", 1);
    expect_error("ncols 1\nnrows 1\ncellsize 2\n1\n", 3);
}

TEST_CASE("render_grid round-trips and picks a free sentinel") {
    NdArray a({2, 2}, {1.5, -9999, 3, 4}, std::vector<bool>{false, false, true, false});
    std::string text = render_grid(a);
    CHECK(text.find("nodata_value") != std::string::npos);
    CHECK(text.find("1.5 -9999\n") != std::string::npos);  // the real value stays
    CHECK(parse_grid(text) == a);

    auto plain = NdArray::matrix({{0.1, 0.2}});
    CHECK(render_grid(plain).find("nodata") == std::string::npos);
    CHECK(parse_grid(render_grid(plain)) == plain);
    CHECK_THROWS_AS(render_grid(NdArray::vector({1})), ShapeError);
}

TEST_CASE("parse_csv treats empty fields as masked") {
    auto a = parse_csv("1,2,3\n4,,6\n");
    CHECK(a.shape() == Shape{2, 3});
    CHECK(a.masked(4));
    CHECK_THROWS_AS(parse_csv("1,2\n3\n"), ParseError);
    CHECK_THROWS_AS(parse_csv("1,a\n"), ParseError);
}

TEST_CASE("canonical_text distinguishes shape, mask and values") {
    auto a = NdArray::vector({1, 2});
    CHECK(canonical_text(a) != canonical_text(NdArray::matrix({{1, 2}})));
    CHECK(canonical_text(a) != canonical_text(NdArray({2}, {1, 2}, std::vector<bool>{false, true})));
    CHECK(canonical_text(a) == canonical_text(NdArray::vector({1, 2}).with_name("other")));
}

TEST_CASE("stack") {
    std::vector<NdArray> layers{NdArray::matrix({{1, 2}}), NdArray::matrix({{3, 4}})};
    auto s = stack(layers);
    CHECK(s.shape() == Shape{2, 1, 2});
    CHECK(s[3] == 4.0);
    std::vector<NdArray> bad{NdArray::matrix({{1, 2}}), NdArray::matrix({{3}, {4}})};
    CHECK_THROWS_WITH_AS(stack(bad), doctest::Contains("shape mismatch among layers"), ShapeError);
}

TEST_CASE("file helpers") {
    auto dir = std::filesystem::temp_directory_path() / "semdtm_array_test";
    std::filesystem::create_directories(dir);
    write_text_atomic(dir / "a.grid", "ncols 1\nnrows 1\n7\n");
    auto a = load_array(dir / "a.grid");
    CHECK(a.name() == "a");
    CHECK(a[0] == 7.0);
    write_text_atomic(dir / "b.csv", "1,2\n");
    CHECK(load_array(dir / "b.csv").shape() == Shape{1, 2});
    CHECK_FALSE(std::filesystem::exists(dir / "b.csv.tmp"));
    CHECK_THROWS_AS(load_array(dir / "missing.grid"), IoError);
    std::filesystem::remove_all(dir);
}
