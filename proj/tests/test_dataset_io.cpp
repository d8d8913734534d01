#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <string>

#include "helpers.hpp"
#include "pseudoscene/dataset_io.hpp"

namespace dio = pseudoscene::dataset_io;
namespace geo = pseudoscene::geometry;
using pseudoscene::IoError;
using pseudoscene::ParseError;
using nlohmann::json;

namespace {

const char* kMinimalDataset = R"({
  "info": {"description": "fixture"},
  "images": [
    {"id": 1, "file_name": "a.jpg", "width": 640, "height": 480},
    {"id": 2, "file_name": "b.jpg", "width": 100, "height": 100, "license": 3}
  ],
  "annotations": [
    {"id": 10, "image_id": 1, "category_id": 5, "bbox": [10, 20, 30, 40],
     "area": 1200.0, "iscrowd": 0},
    {"id": 11, "image_id": 2, "category_id": 5, "bbox": [0, 0, 10, 10],
     "strategy": "F", "source_score": 0.75, "segmentation": []}
  ],
  "categories": [
    {"id": 5, "name": "turkey", "synset": "n01794158", "image_count": 204}
  ]
})";

dio::CocoDataset random_dataset(std::mt19937_64& rng, int image_count) {
    dio::CocoDataset dataset;
    dataset.extra["info"] = {{"description", "synthetic"}};
    for (int c = 1; c <= 6; ++c) {
        dio::CocoCategory category;
        category.id = c;
        category.name = "class" + std::to_string(c);
        if (c % 2 == 0) {
            category.synset = "n0000000" + std::to_string(c);
        }
        dataset.categories.push_back(std::move(category));
    }
    std::int64_t annotation_id = 1;
    for (int i = 1; i <= image_count; ++i) {
        dio::CocoImage image;
        image.id = i;
        image.file_name = "img" + std::to_string(i) + ".jpg";
        image.width = 320;
        image.height = 240;
        if (i % 3 == 0) {
            image.extra["flickr_url"] = "http://example.com/" + std::to_string(i);
        }
        dataset.images.push_back(std::move(image));
        // The first two images always carry a box so tests can index into
        // the annotation list.
        const int n = i <= 2 ? 1 + static_cast<int>(testutil::draw(rng, 3))
                             : static_cast<int>(testutil::draw(rng, 4));
        for (int k = 0; k < n; ++k) {
            dio::CocoAnnotation annotation;
            annotation.id = annotation_id++;
            annotation.image_id = i;
            annotation.category_id = 1 + static_cast<int>(testutil::draw(rng, 6));
            annotation.bbox = geo::BBox{static_cast<double>(testutil::draw(rng, 200)),
                                        static_cast<double>(testutil::draw(rng, 150)),
                                        1.0 + static_cast<double>(testutil::draw(rng, 100)),
                                        1.0 + static_cast<double>(testutil::draw(rng, 80))};
            annotation.area = annotation.bbox.w * annotation.bbox.h;
            if (k == 0) {
                annotation.iscrowd = 0;
                annotation.strategy = "D";
                annotation.source_score = 0.5 + testutil::draw_unit(rng) * 0.5;
            }
            dataset.annotations.push_back(std::move(annotation));
        }
    }
    return dataset;
}

}  // namespace

TEST_CASE("minimal dataset parses with defaults", "[dataset_io]") {
    const auto dataset = dio::dataset_from_json(json::parse(kMinimalDataset), "fixture");
    REQUIRE(dataset.images.size() == 2);
    REQUIRE(dataset.annotations.size() == 2);
    REQUIRE(dataset.categories.size() == 1);

    CHECK(dataset.images[0].file_name == "a.jpg");
    CHECK(dataset.images[1].extra["license"] == 3);
    CHECK(dataset.extra["info"]["description"] == "fixture");

    const auto& first = dataset.annotations[0];
    CHECK(first.bbox == geo::BBox{10, 20, 30, 40});
    CHECK(first.area == 1200.0);
    CHECK(first.iscrowd == 0);
    CHECK_FALSE(first.strategy.has_value());

    const auto& second = dataset.annotations[1];
    CHECK(second.strategy == "F");
    CHECK(second.source_score == 0.75);
    CHECK(second.area == 100.0);  // defaulted from bbox
    CHECK(second.extra.contains("segmentation"));

    CHECK(dataset.categories[0].synset == "n01794158");
    CHECK(dataset.categories[0].image_count == 204);
    CHECK_FALSE(dataset.categories[0].instance_count.has_value());
}

TEST_CASE("structural breaks fail the parse", "[dataset_io]") {
    auto base = json::parse(kMinimalDataset);

    SECTION("missing collection") {
        base.erase("categories");
        CHECK_THROWS_AS(dio::dataset_from_json(base, "x"), ParseError);
    }
    SECTION("duplicate image id") {
        base["images"][1]["id"] = 1;
        CHECK_THROWS_WITH(dio::dataset_from_json(base, "x"),
                          Catch::Matchers::ContainsSubstring("duplicate image id 1"));
    }
    SECTION("duplicate annotation id") {
        base["annotations"][1]["id"] = 10;
        CHECK_THROWS_AS(dio::dataset_from_json(base, "x"), ParseError);
    }
    SECTION("duplicate category id") {
        base["categories"].push_back({{"id", 5}, {"name", "again"}});
        CHECK_THROWS_AS(dio::dataset_from_json(base, "x"), ParseError);
    }
    SECTION("dangling image reference") {
        base["annotations"][0]["image_id"] = 404;
        CHECK_THROWS_WITH(dio::dataset_from_json(base, "x"),
                          Catch::Matchers::ContainsSubstring("missing image 404"));
    }
    SECTION("dangling category reference") {
        base["annotations"][0]["category_id"] = 404;
        CHECK_THROWS_AS(dio::dataset_from_json(base, "x"), ParseError);
    }
    SECTION("bbox with wrong arity") {
        base["annotations"][0]["bbox"] = {1, 2, 3};
        CHECK_THROWS_AS(dio::dataset_from_json(base, "x"), ParseError);
    }
    SECTION("non-numeric field") {
        base["images"][0]["width"] = "wide";
        CHECK_THROWS_AS(dio::dataset_from_json(base, "x"), ParseError);
    }
}

TEST_CASE("parse errors carry element context", "[dataset_io]") {
    auto base = json::parse(kMinimalDataset);
    base["annotations"][1].erase("bbox");
    try {
        dio::dataset_from_json(base, "train.json");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        const std::string message = e.what();
        CHECK(message.find("train.json") != std::string::npos);
        CHECK(message.find("annotations[1]") != std::string::npos);
        CHECK(message.find("bbox") != std::string::npos);
    }
}

TEST_CASE("unknown fields survive a round trip", "[dataset_io]") {
    const auto dataset = dio::dataset_from_json(json::parse(kMinimalDataset), "fixture");
    const json emitted = dio::dataset_to_json(dataset);

    CHECK(emitted["info"]["description"] == "fixture");
    CHECK(emitted["images"][1]["license"] == 3);
    CHECK(emitted["annotations"][1]["segmentation"] == json::array());
    CHECK(emitted["annotations"][1]["strategy"] == "F");
    CHECK(emitted["annotations"][1]["source_score"] == 0.75);
    CHECK(emitted["categories"][0]["image_count"] == 204);

    const auto reparsed = dio::dataset_from_json(emitted, "reparsed");
    CHECK(dio::dataset_to_json(reparsed) == emitted);
}

TEST_CASE("emission is canonical", "[dataset_io]") {
    std::mt19937_64 rng(2024);
    const auto dataset = random_dataset(rng, 20);

    auto shuffled = dataset;
    std::reverse(shuffled.images.begin(), shuffled.images.end());
    std::reverse(shuffled.annotations.begin(), shuffled.annotations.end());
    std::reverse(shuffled.categories.begin(), shuffled.categories.end());

    const std::string bytes_a = dio::dataset_to_json(dataset).dump(2);
    const std::string bytes_b = dio::dataset_to_json(shuffled).dump(2);
    CHECK(bytes_a == bytes_b);
    CHECK(bytes_a == dio::dataset_to_json(dataset).dump(2));
}

TEST_CASE("file round trip preserves every record", "[dataset_io]") {
    std::mt19937_64 rng(31337);
    const auto dataset = random_dataset(rng, 200);

    testutil::TempDir dir;
    const std::string path = dir.file("out.json");
    dio::emit_coco(dataset, path);
    const auto loaded = dio::parse_coco(path);

    REQUIRE(loaded.images.size() == dataset.images.size());
    REQUIRE(loaded.annotations.size() == dataset.annotations.size());
    REQUIRE(loaded.categories.size() == dataset.categories.size());
    CHECK(dio::dataset_to_json(loaded) == dio::dataset_to_json(dataset));

    // Emitting the reloaded dataset reproduces the file byte for byte.
    const std::string again = dir.file("again.json");
    dio::emit_coco(loaded, again);
    CHECK(testutil::read_text(again) == testutil::read_text(path));
}

TEST_CASE("io failures are reported as such", "[dataset_io]") {
    CHECK_THROWS_AS(dio::parse_coco("/nonexistent/nowhere.json"), IoError);
    CHECK_THROWS_AS(dio::emit_coco(dio::CocoDataset{}, "/nonexistent/dir/out.json"), IoError);
    testutil::TempDir dir;
    testutil::write_text(dir.file("bad.json"), "{not json");
    CHECK_THROWS_AS(dio::parse_coco(dir.file("bad.json")), ParseError);
}

TEST_CASE("detection rows merge by image and box", "[dataset_io]") {
    testutil::TempDir dir;
    testutil::write_text(dir.file("det.json"), R"([
      {"image_id": 1, "category_id": 3, "bbox": [10, 10, 20, 20], "score": 0.9},
      {"image_id": 1, "category_id": 7, "bbox": [10, 10, 20, 20], "score": 0.05},
      {"image_id": 1, "category_id": 3, "bbox": [50, 50, 5, 5], "score": 0.4},
      {"image_id": 2, "category_id": 3, "bbox": [10, 10, 20, 20], "score": 0.8}
    ])");
    const auto grouped = dio::parse_detections(dir.file("det.json"));
    REQUIRE(grouped.size() == 2);
    REQUIRE(grouped.at(1).size() == 2);
    REQUIRE(grouped.at(2).size() == 1);

    const auto& merged = grouped.at(1)[0];
    CHECK(merged.box == geo::BBox{10, 10, 20, 20});
    REQUIRE(merged.scores.size() == 2);
    CHECK(merged.top_score() == 0.9);
    CHECK(grouped.at(1)[1].scores.size() == 1);
}

TEST_CASE("detection parsing rejects bad rows", "[dataset_io]") {
    testutil::TempDir dir;

    testutil::write_text(dir.file("dup.json"), R"([
      {"image_id": 1, "category_id": 3, "bbox": [10, 10, 20, 20], "score": 0.9},
      {"image_id": 1, "category_id": 3, "bbox": [10, 10, 20, 20], "score": 0.8}
    ])");
    CHECK_THROWS_WITH(dio::parse_detections(dir.file("dup.json")),
                      Catch::Matchers::ContainsSubstring("duplicate"));

    testutil::write_text(dir.file("score.json"),
                         R"([{"image_id": 1, "category_id": 3, "bbox": [0, 0, 5, 5],
                              "score": 1.5}])");
    CHECK_THROWS_AS(dio::parse_detections(dir.file("score.json")), ParseError);

    testutil::write_text(dir.file("flat.json"),
                         R"([{"image_id": 1, "category_id": 3, "bbox": [0, 0, 0, 5],
                              "score": 0.5}])");
    CHECK_THROWS_AS(dio::parse_detections(dir.file("flat.json")), ParseError);

    testutil::write_text(dir.file("object.json"), R"({"image_id": 1})");
    CHECK_THROWS_AS(dio::parse_detections(dir.file("object.json")), ParseError);
}

TEST_CASE("detection parsing conserves rows at scale", "[dataset_io]") {
    std::mt19937_64 rng(55);
    json rows = json::array();
    const int row_count = 10000;
    for (int i = 0; i < row_count; ++i) {
        // Boxes collide across rows on purpose; classes within one
        // (image, box) cell stay distinct by construction.
        const std::int64_t image_id = 1 + static_cast<std::int64_t>(testutil::draw(rng, 40));
        const double x = static_cast<double>(testutil::draw(rng, 12)) * 10.0;
        const int category_id = static_cast<int>(i);
        rows.push_back({{"image_id", image_id},
                        {"category_id", category_id},
                        {"bbox", {x, 0.0, 10.0, 10.0}},
                        {"score", 0.5}});
    }
    testutil::TempDir dir;
    testutil::write_text(dir.file("bulk.json"), rows.dump());
    const auto grouped = dio::parse_detections(dir.file("bulk.json"));

    std::size_t total_scores = 0;
    for (const auto& [image_id, records] : grouped) {
        for (const auto& record : records) {
            CHECK(record.image_id == image_id);
            total_scores += record.scores.size();
        }
    }
    CHECK(total_scores == static_cast<std::size_t>(row_count));
}

TEST_CASE("a clean dataset validates clean", "[dataset_io]") {
    std::mt19937_64 rng(9);
    const auto dataset = random_dataset(rng, 30);
    const auto report = dio::validate_dataset(dataset);
    CHECK(report.fatal_count() == 0);
    CHECK(report.warning_count() == 0);
    CHECK(report.image_count == 30);
    CHECK(report.buckets.categories_total == 6);
}

TEST_CASE("validator flags each structural break", "[dataset_io]") {
    std::mt19937_64 rng(10);
    auto find = [](const dio::ValidationReport& report, const std::string& code) {
        for (const auto& finding : report.findings) {
            if (finding.code == code) {
                return true;
            }
        }
        return false;
    };

    auto dataset = random_dataset(rng, 5);
    dataset.images.push_back(dataset.images[0]);
    auto report = dio::validate_dataset(dataset);
    CHECK(find(report, "duplicate_image_id"));
    CHECK(report.fatal_count() == 1);

    dataset = random_dataset(rng, 5);
    dataset.images[0].width = 0;
    CHECK(find(dio::validate_dataset(dataset), "degenerate_image"));

    dataset = random_dataset(rng, 5);
    dataset.categories.push_back(dataset.categories[0]);
    CHECK(find(dio::validate_dataset(dataset), "duplicate_category_id"));

    dataset = random_dataset(rng, 5);
    REQUIRE(dataset.annotations.size() >= 2);
    dataset.annotations[1].id = dataset.annotations[0].id;
    CHECK(find(dio::validate_dataset(dataset), "duplicate_annotation_id"));

    dataset = random_dataset(rng, 5);
    dataset.annotations[0].image_id = 999;
    CHECK(find(dio::validate_dataset(dataset), "dangling_image_ref"));

    dataset = random_dataset(rng, 5);
    dataset.annotations[0].category_id = 999;
    CHECK(find(dio::validate_dataset(dataset), "dangling_category_ref"));

    dataset = random_dataset(rng, 5);
    dataset.annotations[0].bbox.w = 0.0;
    report = dio::validate_dataset(dataset);
    CHECK(find(report, "degenerate_bbox"));
    CHECK(report.fatal_count() == 1);
}

TEST_CASE("validator warns without failing", "[dataset_io]") {
    std::mt19937_64 rng(11);
    auto dataset = random_dataset(rng, 5);
    REQUIRE(dataset.annotations.size() >= 2);
    dataset.annotations[0].bbox.x = 310.0;  // image is 320 wide, box is wider than 10
    dataset.annotations[0].bbox.w = 60.0;
    dataset.annotations[0].area = dataset.annotations[0].bbox.area();
    dataset.annotations[1].area += 5.0;

    const auto report = dio::validate_dataset(dataset);
    CHECK(report.fatal_count() == 0);
    CHECK(report.warning_count() == 2);
    bool saw_bounds = false;
    bool saw_area = false;
    for (const auto& finding : report.findings) {
        saw_bounds = saw_bounds || finding.code == "bbox_out_of_bounds";
        saw_area = saw_area || finding.code == "area_mismatch";
        CHECK_FALSE(finding.fatal);
    }
    CHECK(saw_bounds);
    CHECK(saw_area);
}

TEST_CASE("area check tolerates rounding noise", "[dataset_io]") {
    std::mt19937_64 rng(12);
    auto dataset = random_dataset(rng, 3);
    dataset.annotations[0].area = dataset.annotations[0].bbox.area() * (1.0 + 1e-9);
    const auto report = dio::validate_dataset(dataset);
    CHECK(report.warning_count() == 0);
}

TEST_CASE("validation summarizes category buckets", "[dataset_io]") {
    dio::CocoDataset dataset;
    for (int i = 1; i <= 120; ++i) {
        dio::CocoImage image;
        image.id = i;
        image.file_name = std::to_string(i) + ".jpg";
        image.width = 50;
        image.height = 50;
        dataset.images.push_back(std::move(image));
    }
    for (int c = 1; c <= 3; ++c) {
        dio::CocoCategory category;
        category.id = c;
        category.name = "c" + std::to_string(c);
        dataset.categories.push_back(std::move(category));
    }
    // Class 1 in 4 images, class 2 in 110 images, class 3 in none.
    std::int64_t id = 1;
    auto annotate = [&](std::int64_t image_id, int cls) {
        dio::CocoAnnotation annotation;
        annotation.id = id++;
        annotation.image_id = image_id;
        annotation.category_id = cls;
        annotation.bbox = geo::BBox{0, 0, 5, 5};
        annotation.area = 25.0;
        dataset.annotations.push_back(std::move(annotation));
    };
    for (int i = 1; i <= 4; ++i) {
        annotate(i, 1);
    }
    for (int i = 1; i <= 110; ++i) {
        annotate(i, 2);
    }

    const auto report = dio::validate_dataset(dataset);
    CHECK(report.buckets.categories_total == 3);
    CHECK(report.buckets.zero_image_categories == 1);
    CHECK(report.buckets.rare == 2);
    CHECK(report.buckets.common == 0);
    CHECK(report.buckets.frequent == 1);

    const json encoded = dio::report_to_json(report);
    CHECK(encoded["buckets"]["rare"] == 2);
    CHECK(encoded["fatal_count"] == 0);
    CHECK(encoded["findings"].is_array());
}
