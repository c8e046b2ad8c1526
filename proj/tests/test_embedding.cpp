#include <cmath>
#include <thread>

#include <gtest/gtest.h>

#include "exbert/embedding.hpp"
#include "exbert/remote_provider.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace exbert;
using testing_support::fixture;

TEST(Tokenize, Examples) {
  EXPECT_EQ(tokenize("A giant wave is about to crash on some boys."),
            (std::vector<std::string>{"a", "giant", "wave", "is", "about", "to", "crash", "on", "some", "boys"}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_EQ(tokenize("public speaking is a speaking"),
            (std::vector<std::string>{"public", "speaking", "is", "a", "speaking"}));
  EXPECT_EQ(tokenize("  don't--stop!! 42x "), (std::vector<std::string>{"don", "t", "stop", "42x"}));
}

TEST(HashProvider, UnitNormRows) {
  HashProvider p(8, 0);
  auto m = p.embed({"wave"}, false);
  ASSERT_EQ(m.vectors.rows(), 1);
  ASSERT_EQ(m.vectors.cols(), 8);
  EXPECT_NEAR(m.vectors.row(0).norm(), 1.0, 1e-6);
  EXPECT_FALSE(m.cls.has_value());
}

TEST(HashProvider, DeterministicPerWordAndSeed) {
  HashProvider a(16, 3), b(16, 3), c(16, 4);
  auto x = a.embed({"wave", "crash", "wave"}, true);
  auto y = b.embed({"wave", "crash", "wave"}, true);
  EXPECT_EQ(x.vectors, y.vectors);
  EXPECT_EQ(x.vectors.row(0), x.vectors.row(2));
  EXPECT_NE(x.vectors.row(0), c.embed({"wave"}, false).vectors.row(0));
  ASSERT_TRUE(x.cls);
  EXPECT_NEAR((*x.cls - x.vectors.colwise().mean().transpose()).norm(), 0.0, 1e-15);
}

TEST(HashProvider, DistinctWordsAreNearOrthogonal) {
  HashProvider p(64, 0);
  double sum = 0;
  for (int i = 0; i < 1000; ++i) {
    auto m = p.embed({"w" + std::to_string(i), "v" + std::to_string(i)}, false);
    double c = oracle::cosine_loop({m.vectors.row(0).data(), m.vectors.row(0).data() + 64},
                                   {m.vectors.row(1).data(), m.vectors.row(1).data() + 64});
    EXPECT_LT(c, 1.0 - 1e-9);
    sum += c;
  }
  EXPECT_LT(std::abs(sum / 1000), 0.2);
  auto same = p.embed({"wave", "wave"}, false);
  EXPECT_NEAR(same.vectors.row(0).dot(same.vectors.row(1)), 1.0, 1e-12);
}

TEST(HashProvider, ClsOnEmptySentenceErrors) {
  HashProvider p(8, 0);
  EXPECT_THROW(p.embed({}, true), ShapeError);
  EXPECT_EQ(p.embed({}, false).vectors.rows(), 0);
}

TEST(FileProvider, ReadsRecordsAndCls) {
  testing_support::TempDir dir;
  testing_support::spit(dir / "emb.tsv",
                        "[CLS] wave crash [SEP]\t2\t1,0,0,1,0.5,0.5,1,1,0.25,0.75\n"
                        "wave\t2\t3,4\n");
  FileProvider p(dir / "emb.tsv");
  EXPECT_EQ(p.dim(), 2);
  auto m = p.embed({"[CLS]", "wave", "crash", "[SEP]"}, true);
  EXPECT_EQ(m.vectors.rows(), 4);
  EXPECT_DOUBLE_EQ(m.vectors(1, 0), 0.0);
  EXPECT_DOUBLE_EQ(m.vectors(1, 1), 1.0);
  ASSERT_TRUE(m.cls);
  EXPECT_DOUBLE_EQ((*m.cls)[1], 0.75);
  EXPECT_DOUBLE_EQ(p.embed({"wave"}, false).vectors(0, 1), 4.0);
  EXPECT_THROW(p.embed({"wave"}, true), LookupError);
  EXPECT_THROW(p.embed({"missing"}, false), LookupError);
}

TEST(FileProvider, DimensionMismatchErrors) {
  testing_support::TempDir dir;
  testing_support::spit(dir / "emb.tsv", "a\t2\t1,2\nb\t3\t1,2,3\n");
  EXPECT_THROW(FileProvider(dir / "emb.tsv"), ShapeError);
  testing_support::spit(dir / "ok.tsv", "a\t2\t1,2\n");
  EXPECT_THROW(FileProvider(dir / "ok.tsv", 4), ShapeError);
  testing_support::spit(dir / "short.tsv", "a b\t2\t1,2,3\n");
  EXPECT_THROW(FileProvider(dir / "short.tsv").embed({"a", "b"}, false), ShapeError);
}

TEST(CachingProvider, ConcurrentReadersSeeIdenticalValues) {
  auto inner = std::make_shared<HashProvider>(16, 9);
  CachingProvider cache(inner);
  std::vector<std::vector<std::string>> sentences;
  for (int i = 0; i < 20; ++i) sentences.push_back({"w" + std::to_string(i), "shared"});
  std::vector<std::thread> threads;
  std::atomic<int> mismatches{0};
  for (int t = 0; t < 8; ++t) {
    threads.emplace_back([&] {
      for (int rep = 0; rep < 50; ++rep) {
        for (const auto& s : sentences) {
          if (cache.embed(s, rep % 2 == 0).vectors != inner->embed(s, false).vectors) ++mismatches;
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(mismatches.load(), 0);
  EXPECT_EQ(cache.size(), 40u);
}

TEST(MakeProvider, ParsesKinds) {
  EXPECT_EQ(parse_provider_kind("hash"), ProviderKind::hash);
  EXPECT_THROW(parse_provider_kind("bert"), Error);
  auto p = make_provider({ProviderKind::hash, 12, "", 1});
  EXPECT_EQ(p->dim(), 12);
}

// ---------------------------------------------------------------- wire protocol

namespace {

/// In-process stand-in for the embedding service.
class MockService {
 public:
  explicit MockService(std::function<void(const httplib::Request&, httplib::Response&)> embed,
                       std::string health = R"({"status":"ok","dim":768,"model":"mock"})") {
    server_.Post("/embed", [embed](const httplib::Request& req, httplib::Response& res) { embed(req, res); });
    server_.Get("/health", [health](const httplib::Request&, httplib::Response& res) {
      res.set_content(health, "application/json");
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~MockService() {
    server_.stop();
    thread_.join();
  }
  std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(RemoteProvider, RequestMatchesGoldenFixture) {
  auto golden = nlohmann::json::parse(testing_support::slurp(fixture("golden_embed_request.json")));
  EXPECT_EQ(make_embed_request({{"wave", "crash"}}, true), golden);
}

TEST(RemoteProvider, DecodesGoldenResponseFromMockServer) {
  const auto golden = testing_support::slurp(fixture("golden_embed_response.json"));
  std::string seen_body;
  MockService svc([&](const httplib::Request& req, httplib::Response& res) {
    seen_body = req.body;
    res.set_content(golden, "application/json");
  });
  RemoteProvider p(svc.endpoint(), 0);
  EXPECT_EQ(p.dim(), 768);
  auto m = p.embed({"wave", "crash"}, true);
  EXPECT_EQ(nlohmann::json::parse(seen_body),
            nlohmann::json::parse(testing_support::slurp(fixture("golden_embed_request.json"))));
  ASSERT_EQ(m.vectors.rows(), 2);
  ASSERT_EQ(m.vectors.cols(), 768);
  ASSERT_TRUE(m.cls);
  // fixture values were generated as round(sin(0.37 (i+1)(w+1)) / 2, 6) and round(cos(0.11 (i+3)) / 4, 6)
  for (int w = 0; w < 2; ++w) {
    for (int i = 0; i < 768; i += 97) {
      EXPECT_NEAR(m.vectors(w, i), std::sin(0.37 * (i + 1) * (w + 1)) * 0.5, 5e-7);
    }
  }
  for (int i = 0; i < 768; i += 101) EXPECT_NEAR((*m.cls)[i], std::cos(0.11 * (i + 3)) * 0.25, 5e-7);
}

TEST(RemoteProvider, UnreachableIsTransportError) {
  const int port = testing_support::closed_local_port();
  EXPECT_THROW(RemoteProvider("http://127.0.0.1:" + std::to_string(port), 0), TransportError);
  RemoteProvider known("http://127.0.0.1:" + std::to_string(port), 8);
  EXPECT_THROW(known.embed({"wave"}, false), TransportError);
}

TEST(RemoteProvider, ProtocolViolationsAreTransportErrors) {
  MockService wrong_count([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"dim":2,"embeddings":[[[1,2]]],"cls":null})", "application/json");
  });
  RemoteProvider p(wrong_count.endpoint(), 2);
  EXPECT_THROW(p.embed({"wave", "crash"}, false), TransportError);
  EXPECT_THROW(p.embed({"wave"}, true), TransportError);
  EXPECT_NO_THROW(p.embed({"wave"}, false));

  MockService garbage([](const httplib::Request&, httplib::Response& res) {
    res.set_content("not json", "application/json");
  });
  EXPECT_THROW(RemoteProvider(garbage.endpoint(), 2).embed({"wave"}, false), TransportError);

  MockService http_error([](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
    res.set_content("boom", "text/plain");
  });
  EXPECT_THROW(RemoteProvider(http_error.endpoint(), 2).embed({"wave"}, false), TransportError);
}

TEST(RemoteProvider, DimensionMismatchErrors) {
  MockService svc([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"dim":3,"embeddings":[[[1,2,3]]],"cls":null})", "application/json");
  });
  EXPECT_THROW(RemoteProvider(svc.endpoint(), 2).embed({"wave"}, false), ShapeError);
  MockService ragged([](const httplib::Request&, httplib::Response& res) {
    res.set_content(R"({"dim":3,"embeddings":[[[1,2]]],"cls":null})", "application/json");
  });
  EXPECT_THROW(RemoteProvider(ragged.endpoint(), 3).embed({"wave"}, false), ShapeError);
}

TEST(RemoteProvider, EmptyBatchRoundTrip) {
  auto decoded = decode_embed_response(nlohmann::json::parse(R"({"dim":768,"embeddings":[],"cls":[]})"), {}, true, 768);
  EXPECT_TRUE(decoded.empty());
}
