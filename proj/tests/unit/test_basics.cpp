#include <doctest.h>

#include <set>

#include "sexid/errors.hpp"
#include "sexid/hashing.hpp"
#include "sexid/labels.hpp"
#include "sexid/rng.hpp"
#include "sexid/text_util.hpp"
#include "temp_dir.hpp"

using namespace sexid;

TEST_CASE("label spaces keep declaration order") {
    const auto t1 = LabelSpace::task1();
    REQUIRE(t1.size() == 2);
    CHECK(t1[0] == "non-sexist");
    CHECK(t1[1] == "sexist");
    CHECK(LabelSpace::task2_categories().size() == 5);
    const auto e2e = LabelSpace::task2_end_to_end();
    REQUIRE(e2e.size() == 6);
    CHECK(e2e[0] == "non-sexist");
    for (std::size_t i = 0; i < 5; ++i) CHECK(e2e[i + 1] == kCategories[i]);
    CHECK(LabelSpace::for_task(Task::task2) == LabelSpace::task2_categories());
    CHECK_THROWS_AS(t1.require_index("maybe"), ValidationError);
    CHECK_THROWS_AS(LabelSpace(LabelKind::end_to_end, {"a", "a"}), ArgumentError);
    CHECK(parse_label_space(serialize(e2e)) == e2e);
}

TEST_CASE("enum names round-trip") {
    for (auto l : kLanguages) CHECK(parse_language(to_string(l)) == l);
    CHECK(parse_source("gab") == Source::gab);
    CHECK(parse_task("task2") == Task::task2);
    CHECK_FALSE(parse_language("fr").has_value());
}

TEST_CASE("number formatting") {
    CHECK(format_decimal(5e-5) == "0.00005");
    CHECK(format_decimal(2e-5) == "0.00002");
    CHECK(format_decimal(32) == "32");
    CHECK(format_metric(0.7886) == "0.789");
    CHECK(parse_real(format_real(0.1 + 0.2), "x") == 0.1 + 0.2);
    CHECK_THROWS_AS(parse_real("1.5x", "x"), FormatError);
    CHECK_THROWS_AS(parse_int("", "x"), FormatError);
}

TEST_CASE("tsv parsing validates shape") {
    auto t = parse_tsv("a\tb\r\n1\t2\n3\t4\n", "mem");
    CHECK(t.header == std::vector<std::string>{"a", "b"});
    REQUIRE(t.rows.size() == 2);
    CHECK(t.rows[1][1] == "4");
    CHECK(t.line_numbers[1] == 3);
    CHECK(t.column("b") == 1);
    CHECK_THROWS_AS(parse_tsv("a\tb\n1\n", "mem"), FormatError);
    CHECK_THROWS_AS(check_tsv_field("x\ty", "f"), FormatError);
}

TEST_CASE("key-value configs with sections") {
    auto kv = parse_key_values("# c\ntop = 1\n[sec]\nk = v w\n", "cfg");
    CHECK(kv.at("top") == "1");
    CHECK(kv.at("sec.k") == "v w");
    CHECK_THROWS_AS(parse_key_values("a = 1\na = 2\n", "cfg"), FormatError);
    CHECK_THROWS_AS(parse_key_values("novalue\n", "cfg"), FormatError);
    CHECK(parse_key_values(render_key_values(kv), "again") == kv);
}

TEST_CASE("text tables pad by code points") {
    auto t = render_table({"Lang", "Acc"}, {{"Español", "0.5"}, {"en", "1"}});
    CHECK(t == "Lang     Acc\n------------\nEspañol  0.5\nen       1\n");
}

TEST_CASE("sha256 known vectors") {
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("fingerprints are length-prefixed and order-sensitive") {
    auto fp = [](std::initializer_list<std::string_view> fields) {
        Fingerprinter f;
        for (auto x : fields) f.add(x);
        return f.hex();
    };
    CHECK(fp({"ab", "c"}) != fp({"a", "bc"}));
    CHECK(fp({"a", "b"}) != fp({"b", "a"}));
    CHECK(fp({"a", "b"}) == fp({"a", "b"}));
    CHECK(derive_seed(13, {"search", "M1"}) == derive_seed(13, {"search", "M1"}));
    CHECK(derive_seed(13, {"search", "M1"}) != derive_seed(14, {"search", "M1"}));
    CHECK(derive_seed(13, {"search", "M1"}) != derive_seed(13, {"search", "M2-en"}));
}

TEST_CASE("rng draws are bounded and roughly uniform") {
    Rng rng(5);
    std::vector<int> counts(7);
    for (int i = 0; i < 70000; ++i) {
        auto x = rng.below(7);
        REQUIRE(x < 7);
        ++counts[x];
    }
    for (auto c : counts) CHECK(std::abs(c - 10000) < 500);
    for (int i = 0; i < 1000; ++i) {
        auto u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
    }
    Rng a(9), b(9);
    std::vector<int> va{1, 2, 3, 4, 5, 6}, vb = va;
    a.shuffle(va);
    b.shuffle(vb);
    CHECK(va == vb);
    CHECK(std::multiset<int>(va.begin(), va.end()) == std::multiset<int>{1, 2, 3, 4, 5, 6});
}

TEST_CASE("atomic writes and appends") {
    testing::TempDir dir;
    const auto p = dir / "sub/out.txt";
    write_file(p, "one\n");
    append_file(p, "two\n");
    CHECK(read_file(p) == "one\ntwo\n");
    write_file(p, "three");
    CHECK(read_file(p) == "three");
    CHECK_THROWS(read_file(dir / "missing.txt"));
}
