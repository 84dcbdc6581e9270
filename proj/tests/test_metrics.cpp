#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "cnnf/data/dataset.hpp"
#include "cnnf/metrics.hpp"

using namespace cnnf;

namespace {

std::string read_fixture(const std::string& name) {
  std::ifstream in(std::string(CNNF_FIXTURE_DIR) + "/" + name);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Published 7-class food-state confusion matrix, rows predicted, columns true.
ConfusionMatrix reference_matrix() {
  const std::uint64_t rows[7][7] = {{49, 4, 11, 8, 0, 15, 5},     {5, 53, 9, 2, 4, 8, 14},
                                    {5, 10, 88, 1, 7, 4, 4},      {11, 0, 2, 63, 1, 5, 10},
                                    {1, 4, 4, 4, 47, 2, 2},       {16, 21, 17, 10, 14, 100, 34},
                                    {11, 9, 11, 9, 6, 33, 108}};
  ConfusionMatrix cm(food_state_names());
  for (std::size_t p = 0; p < 7; ++p)
    for (std::size_t t = 0; t < 7; ++t) cm.set(p, t, rows[p][t]);
  return cm;
}

}  // namespace

TEST(Metrics, ReferenceMatrixPrecisionRecallAccuracy) {
  const auto r = make_report(reference_matrix());
  const std::vector<std::string> precision{"53.261%", "55.789%", "73.95%", "68.478%", "73.438%", "47.17%", "57.754%"};
  const std::vector<std::string> recall{"50%", "52.475%", "61.972%", "64.948%", "59.494%", "59.88%", "61.017%"};
  for (std::size_t i = 0; i < 7; ++i) {
    EXPECT_EQ(format_percent(r.precision[i]), precision[i]) << i;
    EXPECT_EQ(format_percent(r.recall[i]), recall[i]) << i;
  }
  EXPECT_EQ(r.confusion.trace(), 508u);
  EXPECT_EQ(r.sample_count, 861u);
  EXPECT_EQ(format_percent(r.accuracy), "59.001%");
}

TEST(Metrics, PrecisionIsRowRecallIsColumn) {
  const auto cm = reference_matrix();
  const auto prec = precision_per_class(cm), rec = recall_per_class(cm);
  for (std::size_t i = 0; i < 7; ++i) {
    double row = 0, col = 0;
    for (std::size_t j = 0; j < 7; ++j) {
      row += double(cm.count(i, j));
      col += double(cm.count(j, i));
    }
    EXPECT_DOUBLE_EQ(*prec[i], double(cm.count(i, i)) / row);
    EXPECT_DOUBLE_EQ(*rec[i], double(cm.count(i, i)) / col);
  }
}

TEST(Metrics, CsvMatchesFixture) {
  const auto fixture = read_fixture("food_confusion.csv");
  ASSERT_FALSE(fixture.empty());
  EXPECT_EQ(emit_report(make_report(reference_matrix()), "csv"), fixture);
  EXPECT_EQ(parse_confusion_csv(fixture), reference_matrix());
}

TEST(Metrics, TextReport) {
  const auto text = emit_report(make_report(reference_matrix()), "text");
  EXPECT_NE(text.find("Producer Accuracy (Precision)"), std::string::npos);
  EXPECT_NE(text.find("User Accuracy (Recall)"), std::string::npos);
  EXPECT_NE(text.find("73.95%"), std::string::npos);
  EXPECT_NE(text.find("Overall accuracy: 59.001% (508/861)"), std::string::npos);
  EXPECT_THROW(emit_report(make_report(reference_matrix()), "xml"), FormatError);
}

TEST(Metrics, EmptyDenominatorsAreNotApplicable) {
  ConfusionMatrix cm({"a", "b", "c"});
  cm.accumulate(0, 0);
  cm.accumulate(0, 1);
  const auto r = make_report(cm);
  EXPECT_EQ(format_percent(r.precision[0]), "50%");
  EXPECT_EQ(format_percent(r.precision[1]), "n/a");  // nothing predicted as b
  EXPECT_EQ(format_percent(r.recall[1]), "0%");
  EXPECT_EQ(format_percent(r.recall[2]), "n/a");  // no true c
  EXPECT_EQ(parse_confusion_csv(emit_report(r, "csv")), cm);
  EXPECT_EQ(format_percent(make_report(ConfusionMatrix({"a", "b"})).accuracy), "n/a");
}

TEST(Metrics, FormatPercent) {
  EXPECT_EQ(format_percent(0.5), "50%");
  EXPECT_EQ(format_percent(1.0), "100%");
  EXPECT_EQ(format_percent(0.0), "0%");
  EXPECT_EQ(format_percent(1.0 / 3.0), "33.333%");
  EXPECT_EQ(format_percent(0.12345), "12.345%");
  EXPECT_EQ(format_percent(std::nullopt), "n/a");
}

TEST(Metrics, AccumulateAndMerge) {
  ConfusionMatrix a({"x", "y"}), b({"x", "y"}), all({"x", "y"});
  const std::vector<int> pred{0, 1, 1, 0, 1}, truth{0, 1, 0, 1, 1};
  for (std::size_t i = 0; i < pred.size(); ++i) (i < 2 ? a : b).accumulate(pred[i], truth[i]);
  all.accumulate(std::span<const int>(pred), std::span<const int>(truth));
  EXPECT_EQ(a.merge(b), all);
  EXPECT_EQ(all.count(1, 1), 2u);
  EXPECT_EQ(all.count(1, 0), 1u);
  EXPECT_THROW(all.accumulate(2, 0), LabelError);
  EXPECT_THROW(all.accumulate(0, -1), LabelError);
  EXPECT_THROW(all.merge(ConfusionMatrix({"x", "z"})), ShapeError);
}

TEST(Metrics, Top1Error) {
  Tensor4<float> logits({3, 1, 1, 3}, std::vector<float>{1, 2, 0, 5, 5, 1, 0, 0, 1});
  EXPECT_EQ(argmax_rows(logits), (std::vector<int>{1, 0, 2}));
  const std::vector<int> labels{1, 1, 2};
  EXPECT_NEAR(top1_error(logits, std::span<const int>(labels)), 1.0 / 3.0, 1e-15);
}

TEST(Metrics, ParseConfusionErrors) {
  EXPECT_THROW(parse_confusion_csv(""), ParseError);
  EXPECT_THROW(parse_confusion_csv("p,a,b\n"), ParseError);
  EXPECT_THROW(parse_confusion_csv("p,a,b,precision\na,1,2,x\n"), ParseError);
  EXPECT_THROW(parse_confusion_csv("p,a,b,precision\na,1,2,x\nb,1,-2,x\nrecall,,,\n"), ParseError);
  EXPECT_THROW(parse_confusion_csv("p,a,b,precision\nb,1,2,x\na,1,2,x\nrecall,,,\n"), ParseError);
  try {
    parse_confusion_csv("p,a,b,precision\na,1,2,x\nb,1,2\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
}

TEST(Curves, RoundTrip) {
  std::vector<EpochRecord> h{{1, 0.5, 0.625, 1e-3}, {2, 0.25, 0.375, 1e-4}};
  const auto text = emit_curves(h);
  EXPECT_EQ(text, "epoch,train_top1,val_top1,lr\n1,0.5,0.625,0.001\n2,0.25,0.375,0.0001\n");
  const auto back = parse_curves(text);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].epoch, 2u);
  EXPECT_EQ(back[1].val_top1_error, 0.375);
  EXPECT_EQ(back[0].lr, 1e-3);
}

TEST(Curves, ColumnsByName) {
  const auto back = parse_curves("lr,val_top1,epoch,train_top1\n0.01,0.2,3,0.1\n");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].epoch, 3u);
  EXPECT_EQ(back[0].train_top1_error, 0.1);
}

TEST(Curves, Errors) {
  try {
    parse_curves("epoch,train_top1,lr\n1,0.1,0.1\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("val_top1"), std::string::npos);
  }
  try {
    parse_curves("epoch,train_top1,val_top1,lr\n1,0.1,0.2,0.1\n2,abc,0.2,0.1\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
  EXPECT_THROW(parse_curves("epoch,train_top1,val_top1,lr\n1.5,0.1,0.2,0.1\n"), ParseError);
  EXPECT_THROW(parse_curves("epoch,train_top1,val_top1,lr\n1,0.1,0.2\n"), ParseError);
  EXPECT_THROW(parse_curves(""), ParseError);
}
