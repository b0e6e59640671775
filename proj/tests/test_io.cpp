#include "mwr/io.hpp"
#include "test_util.hpp"

#include <gtest/gtest.h>

#include <cstring>
#include <limits>
#include <sstream>

using namespace mwr;

namespace {

bool bit_equal(const DenseTensor& a, const DenseTensor& b) {
    if (a.dims() != b.dims()) return false;
    return std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(double)) == 0;
}

bool bit_equal(const CpCoefficients& a, const CpCoefficients& b) {
    if (a.num_modes() != b.num_modes() || a.rank() != b.rank()) return false;
    for (std::size_t k = 0; k < a.num_modes(); ++k) {
        const Matrix& fa = a.factor(k);
        const Matrix& fb = b.factor(k);
        if (fa.rows() != fb.rows()) return false;
        if (std::memcmp(fa.data(), fb.data(), static_cast<std::size_t>(fa.size()) * sizeof(double)) != 0) return false;
    }
    return true;
}

DenseTensor round_trip(const DenseTensor& t) {
    std::stringstream ss;
    io::write_tensor(ss, t);
    return io::read_tensor(ss);
}

} // namespace

TEST(TensorFile, RoundTripsBitExactly) {
    Rng rng = make_rng(3);
    std::uniform_real_distribution<double> expo(-300, 300);
    for (int trial = 0; trial < 30; ++trial) {
        DenseTensor t = standard_normal_tensor(mwr::testing::random_dims(rng, 1 + trial % 4, 5), rng);
        for (std::size_t i = 0; i < t.size(); i += 3) t[i] *= std::pow(10.0, expo(rng));
        EXPECT_TRUE(bit_equal(round_trip(t), t));
    }
}

TEST(TensorFile, ExtremeValuesRoundTrip) {
    const std::vector<double> v{std::numeric_limits<double>::min(), std::numeric_limits<double>::denorm_min(),
                                std::numeric_limits<double>::max(), -std::numeric_limits<double>::max(), 0.1, -0.0,
                                1.0 / 3.0};
    const DenseTensor t({7}, v);
    EXPECT_TRUE(bit_equal(round_trip(t), t));
}

TEST(TensorFile, HeaderLayout) {
    std::stringstream ss;
    io::write_tensor(ss, DenseTensor({2, 1, 3}, {1, 2, 3, 4, 5, 6}));
    std::string l1, l2, l3, l4;
    std::getline(ss, l1);
    std::getline(ss, l2);
    std::getline(ss, l3);
    std::getline(ss, l4);
    EXPECT_EQ(l1, "mwt 1");
    EXPECT_EQ(l2, "3");
    EXPECT_EQ(l3, "2 1 3");
    EXPECT_EQ(l4, "1");
}

TEST(TensorFile, ValuesMayShareLines) {
    std::stringstream ss("mwt 1\n2\n2 2\n1 2\n3 4\n");
    const DenseTensor t = io::read_tensor(ss);
    EXPECT_EQ(t.dims(), (Dims{2, 2}));
    EXPECT_EQ(t.at({1, 0}), 2.0);
    EXPECT_EQ(t.at({0, 1}), 3.0);
}

TEST(TensorFile, RejectsWrongValueCount) {
    std::stringstream few("mwt 1\n2\n2 2\n1 2 3\n");
    EXPECT_THROW(io::read_tensor(few), DataError);
    std::stringstream many("mwt 1\n1\n2\n1 2 3\n");
    EXPECT_THROW(io::read_tensor(many), DataError);
}

TEST(TensorFile, RejectsNonFinite) {
    for (const char* bad : {"nan", "inf", "-inf", "1e400", "abc", "1.5x"}) {
        std::stringstream ss(std::string("mwt 1\n1\n2\n1 ") + bad + "\n");
        EXPECT_THROW(io::read_tensor(ss), DataError) << bad;
    }
    EXPECT_THROW(io::write_tensor(std::cout, DenseTensor({1}, {std::nan("")})), DataError);
}

TEST(TensorFile, RejectsBadHeader) {
    std::stringstream ver("mwt 2\n1\n1\n0\n");
    EXPECT_THROW(io::read_tensor(ver), DataError);
    std::stringstream order("mwt 1\n0\n");
    EXPECT_THROW(io::read_tensor(order), DataError);
    std::stringstream dims("mwt 1\n2\n3\n");
    EXPECT_THROW(io::read_tensor(dims), DataError);
}

TEST(Csv, RowsAreObservations) {
    std::stringstream ss("1, 2, 3\n4,5,6\n\n");
    const DenseTensor t = io::read_tensor(ss);
    EXPECT_EQ(t.dims(), (Dims{2, 3}));
    EXPECT_EQ(t.at({0, 2}), 3.0);
    EXPECT_EQ(t.at({1, 0}), 4.0);
}

TEST(Csv, RejectsRaggedAndBadCells) {
    std::stringstream ragged("1,2\n3\n");
    EXPECT_THROW(io::read_tensor(ragged), DataError);
    std::stringstream empty_cell("1,,2\n");
    EXPECT_THROW(io::read_tensor(empty_cell), DataError);
    std::stringstream nan_cell("1,nan\n");
    EXPECT_THROW(io::read_tensor(nan_cell), DataError);
    std::stringstream nothing("\n\n");
    EXPECT_THROW(io::read_tensor(nothing), DataError);
}

TEST(TensorFile, MissingFileIsIoError) {
    EXPECT_THROW(io::load_tensor("/nonexistent/dir/x.mwt"), IoError);
}

TEST(ModelFile, RoundTripsBitExactly) {
    Rng rng = make_rng(5);
    for (const Dims& out : {Dims{3, 2}, Dims{}}) {
        io::Model m;
        m.coefficients = random_cp({4, 3}, out, 2, rng, 1.0 / 3.0);
        m.lambda = 0.1;
        m.centering.enabled = true;
        m.centering.x_offset = standard_normal_tensor({4, 3}, rng);
        m.centering.y_offset = out.empty() ? DenseTensor({1}, {0.7}) : standard_normal_tensor(out, rng);
        m.objective = 12.345678901234567;
        m.iterations = 42;
        m.converged = true;
        m.seed = 0xfedcba9876543210ULL;
        const io::Json j = io::model_to_json(m);
        const io::Model back = io::model_from_json(io::Json::parse(j.dump()));
        EXPECT_TRUE(bit_equal(back.coefficients, m.coefficients));
        EXPECT_TRUE(bit_equal(back.centering.x_offset, m.centering.x_offset));
        EXPECT_TRUE(bit_equal(back.centering.y_offset, m.centering.y_offset));
        EXPECT_EQ(back.lambda, m.lambda);
        EXPECT_EQ(back.objective, m.objective);
        EXPECT_EQ(back.iterations, m.iterations);
        EXPECT_EQ(back.converged, m.converged);
        EXPECT_EQ(back.seed, m.seed);
        EXPECT_EQ(io::model_to_json(back).dump(), j.dump());
    }
}

TEST(ModelFile, RejectsForeignAndTruncated) {
    EXPECT_THROW(io::model_from_json(io::Json{{"format", "other"}, {"version", 1}}), DataError);
    io::Model m;
    Rng rng = make_rng(1);
    m.coefficients = random_cp({2}, {2}, 1, rng);
    io::Json j = io::model_to_json(m);
    j["factors"][0] = std::vector<double>{1.0};
    EXPECT_THROW(io::model_from_json(j), DataError);
    j.erase("factors");
    EXPECT_THROW(io::model_from_json(j), DataError);
}

TEST(DrawsFile, RoundTripsBitExactly) {
    Rng rng = make_rng(8);
    PosteriorDraws d;
    d.mode = random_cp({3}, {2}, 2, rng);
    d.lambda = 1.5;
    for (int t = 0; t < 4; ++t) {
        d.factors.push_back(random_cp({3}, {2}, 2, rng));
        d.sigma2.push_back(0.1 * (t + 1));
    }
    const PosteriorDraws back = io::draws_from_json(io::Json::parse(io::draws_to_json(d).dump()));
    ASSERT_EQ(back.size(), 4u);
    EXPECT_TRUE(bit_equal(back.mode, d.mode));
    for (std::size_t t = 0; t < 4; ++t) EXPECT_TRUE(bit_equal(back.factors[t], d.factors[t]));
    EXPECT_EQ(back.sigma2, d.sigma2);
    EXPECT_FALSE(back.centering.enabled);
}

TEST(KeyValues, ParsesCommentsAndNormalizesKeys) {
    std::stringstream ss("# header\nmax_iters = 30  # trailing\n\nlambdas=0, 1\nflag=\n");
    const auto kv = io::read_key_values(ss, "cfg");
    ASSERT_EQ(kv.size(), 3u);
    EXPECT_EQ(kv[0], (std::pair<std::string, std::string>{"max-iters", "30"}));
    EXPECT_EQ(kv[1].second, "0, 1");
    EXPECT_EQ(kv[2].second, "");
    std::stringstream bad("novalue\n");
    EXPECT_THROW(io::read_key_values(bad, "cfg"), InvalidArgument);
}
