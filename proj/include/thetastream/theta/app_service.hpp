#pragma once

#include <functional>
#include <string>

#include "thetastream/theta/broker.hpp"
#include "thetastream/theta/immutable_store.hpp"
#include "thetastream/theta/serving_view.hpp"

namespace thetastream::theta {

struct MissingBinding : ThetaError {
  explicit MissingBinding(const std::string& which)
      : ThetaError("app service config lacks required binding '" + which + "'") {}
};

// Named bindings injected into every application service. Messaging and the
// immutable store are mandatory; a serving view only matters for services
// that materialize query state.
struct AppServiceBindings {
  Broker* messaging = nullptr;
  ImmutableStore* immutable_store = nullptr;
  ServingView* serving_view = nullptr;
};

struct AppServiceContext {
  std::string name;
  Broker& messaging;
  ImmutableStore& immutable_store;
  ServingView* serving_view;  // may be null
};

// Validates bindings, then hands the service body a ready context.
void run_app_service(const std::string& name, const AppServiceBindings& bindings,
                     const std::function<void(AppServiceContext&)>& body);

}  // namespace thetastream::theta
