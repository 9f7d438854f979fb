#pragma once

#include <memory>
#include <string>
#include <vector>

#include "meshfield/autograd.hpp"

namespace meshfield::ag {

struct Node {
  std::string name;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;
  bool requires_grad = false;
  std::shared_ptr<Node> node;
};

}  // namespace meshfield::ag
