#pragma once

#include <functional>
#include <string>
#include <utility>

#include "thetastream/theta/broker.hpp"

namespace thetastream::theta {

struct TypeTagMismatch : ThetaError {
  TypeTagMismatch(const std::string& proc, const std::string& want, const std::string& got)
      : ThetaError("processor '" + proc + "' expects stream tag '" + want + "', got '" +
                   got + "'") {}
};

// Lightweight reference to a typed stream owned by some processing context.
// Copying the ref shares the underlying stream, so one source can feed any
// number of chains.
struct StreamRef {
  int id = -1;
  std::string type_tag;
};

// Decorator-style stream stage: wraps an input stream and yields the next one.
// Chains compose innermost-first:
//   out.use(search.use(first.use(fuel.use(source))))
class PreProcessor {
 public:
  PreProcessor(std::string name, std::string in_tag, std::string out_tag,
               std::function<StreamRef(const StreamRef&)> apply)
      : name_(std::move(name)),
        in_tag_(std::move(in_tag)),
        out_tag_(std::move(out_tag)),
        apply_(std::move(apply)) {}

  StreamRef use(const StreamRef& in) const {
    if (in.type_tag != in_tag_) throw TypeTagMismatch(name_, in_tag_, in.type_tag);
    StreamRef out = apply_(in);
    out.type_tag = out_tag_;
    return out;
  }

  const std::string& name() const { return name_; }
  const std::string& in_tag() const { return in_tag_; }
  const std::string& out_tag() const { return out_tag_; }

 private:
  std::string name_;
  std::string in_tag_;
  std::string out_tag_;
  std::function<StreamRef(const StreamRef&)> apply_;
};

// Terminal stage: binds a stream to an output (broker topic, view, ...).
class OutputProcessor {
 public:
  OutputProcessor(std::string name, std::string in_tag,
                  std::function<void(const StreamRef&)> apply)
      : name_(std::move(name)), in_tag_(std::move(in_tag)), apply_(std::move(apply)) {}

  void use(const StreamRef& in) const {
    if (in.type_tag != in_tag_) throw TypeTagMismatch(name_, in_tag_, in.type_tag);
    apply_(in);
  }

  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::string in_tag_;
  std::function<void(const StreamRef&)> apply_;
};

}  // namespace thetastream::theta
