#include "contra/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "contra/error.hpp"

namespace contra {
namespace {

void write_blocks(std::string& out, const char* section, const ParamBlocks& b) {
  out += fmt::format("section {}\n", section);
  out += fmt::format("scalar temperature {:.17g}\n", b.temperature);
  for (const auto& ref : matrix_blocks(b)) {
    const Matrix& m = *ref.values;
    out += fmt::format("block {} {} {}\n", ref.name, m.rows(), m.cols());
    for (std::size_t r = 0; r < m.rows(); ++r) {
      const auto row = m.row(r);
      for (std::size_t c = 0; c < row.size(); ++c) out += fmt::format("{}{:.17g}", c ? " " : "", row[c]);
      out += '\n';
    }
  }
}

class Reader {
 public:
  explicit Reader(std::istream& in, std::string origin) : in_(in), origin_(std::move(origin)) {}

  std::istringstream next() {
    std::string line;
    if (!std::getline(in_, line)) fail("unexpected end of file");
    ++line_no_;
    return std::istringstream(line);
  }

  template <class... T>
  void expect(std::istringstream& ls, const char* keyword, T&... values) {
    std::string word;
    ls >> word;
    if (word != keyword) fail(fmt::format("expected '{}', found '{}'", keyword, word));
    ((ls >> values), ...);
    if (!ls) fail(fmt::format("malformed '{}' line", keyword));
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw InvalidArgument(fmt::format("checkpoint {} line {}: {}", origin_, line_no_, what));
  }

 private:
  std::istream& in_;
  std::string origin_;
  std::size_t line_no_ = 0;
};

void read_blocks(Reader& rd, const char* section, ParamBlocks& b) {
  auto ls = rd.next();
  std::string name;
  rd.expect(ls, "section", name);
  if (name != section) rd.fail(fmt::format("expected section {}, found {}", section, name));
  ls = rd.next();
  std::string scalar;
  rd.expect(ls, "scalar", scalar, b.temperature);
  if (scalar != "temperature") rd.fail(fmt::format("unknown scalar '{}'", scalar));
  for (const auto& ref : matrix_blocks(b)) {
    ls = rd.next();
    std::string block;
    std::size_t rows = 0, cols = 0;
    rd.expect(ls, "block", block, rows, cols);
    if (block != ref.name) rd.fail(fmt::format("expected block {}, found {}", ref.name, block));
    if (rows != ref.values->rows() || cols != ref.values->cols()) {
      rd.fail(fmt::format("block {} is {}x{}, dims say {}x{}", block, rows, cols, ref.values->rows(),
                          ref.values->cols()));
    }
    for (std::size_t r = 0; r < rows; ++r) {
      auto row_stream = rd.next();
      auto row = ref.values->row(r);
      for (double& v : row) {
        std::string tok;
        if (!(row_stream >> tok)) rd.fail(fmt::format("block {} row {} is short", block, r));
        try {
          v = std::stod(tok);
        } catch (const std::exception&) {
          rd.fail(fmt::format("block {} row {}: '{}' is not a number", block, r, tok));
        }
      }
      std::string extra;
      if (row_stream >> extra) rd.fail(fmt::format("block {} row {} has extra values", block, r));
    }
  }
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const EncoderParams& p = ckpt.params;
  const EncoderDims& d = p.dims;
  std::string out = fmt::format("contra-checkpoint {}\n", kCheckpointVersion);
  out += fmt::format("dims {} {} {} {} {} {}\n", d.patches, d.patch_dim, d.image_hidden, d.text_hidden, d.vocab,
                     d.embed_dim);
  out += fmt::format("flags {} {} {:.17g}\n", p.freeze_image ? 1 : 0, p.freeze_text ? 1 : 0, p.dropout);
  write_blocks(out, "params", p.blocks);
  write_blocks(out, "moment1", ckpt.optimizer.first_moment);
  write_blocks(out, "moment2", ckpt.optimizer.second_moment);
  out += fmt::format("optimizer_step {}\nend\n", ckpt.optimizer.step);

  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(fmt::format("cannot write checkpoint '{}'", path.string()));
  os << out;
  if (!os) throw Error(fmt::format("failed writing checkpoint '{}'", path.string()));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument(fmt::format("cannot open checkpoint '{}'", path.string()));
  Reader rd(in, path.string());

  auto ls = rd.next();
  int version = 0;
  rd.expect(ls, "contra-checkpoint", version);
  if (version != kCheckpointVersion) {
    rd.fail(fmt::format("version {} is not supported (expected {})", version, kCheckpointVersion));
  }
  Checkpoint ck;
  EncoderDims& d = ck.params.dims;
  ls = rd.next();
  rd.expect(ls, "dims", d.patches, d.patch_dim, d.image_hidden, d.text_hidden, d.vocab, d.embed_dim);
  ls = rd.next();
  int fi = 0, ft = 0;
  rd.expect(ls, "flags", fi, ft, ck.params.dropout);
  ck.params.freeze_image = fi != 0;
  ck.params.freeze_text = ft != 0;

  // Shapes come from a throwaway initialization with the stored dims.
  ck.params.blocks = init_params(d, SeedContext(0, "shape")).blocks.zeros_like();
  ck.optimizer.first_moment = ck.params.blocks.zeros_like();
  ck.optimizer.second_moment = ck.params.blocks.zeros_like();
  read_blocks(rd, "params", ck.params.blocks);
  read_blocks(rd, "moment1", ck.optimizer.first_moment);
  read_blocks(rd, "moment2", ck.optimizer.second_moment);
  ls = rd.next();
  rd.expect(ls, "optimizer_step", ck.optimizer.step);
  ls = rd.next();
  rd.expect(ls, "end");
  return ck;
}

}  // namespace contra
