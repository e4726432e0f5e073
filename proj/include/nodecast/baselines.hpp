#pragma once

#include <limits>
#include <string>
#include <vector>

#include "nodecast/errors.hpp"

namespace nodecast {

// Reference forecasters the main model is judged against: the random walk
// (persistence) and per-series ARIMA fitted by conditional least squares.

struct ArimaModel {
    int p = 0;
    int d = 0;
    int q = 0;
    std::vector<double> phi;    // AR coefficients, length p
    std::vector<double> theta;  // MA coefficients, length q
    double intercept = 0.0;     // estimated only when d == 0
    double sigma2 = 0.0;        // SSE / n_eff of the conditional residuals
    double aic = std::numeric_limits<double>::infinity();
    bool converged = false;
    std::string status;         // "ok" or why the fit was rejected
};

// Persistence: every horizon gets today's value.
double naive_forecast(const std::vector<double>& series, int h);

// d-fold first differences. Result length shrinks by d.
std::vector<double> difference(const std::vector<double>& series, int d);

// Conditional sum of squared one-step residuals on an already differenced
// series. Residuals before index p are treated as zero, so the sum runs over
// the last (n - p) points. Exposed for direct verification.
double arima_css_sse(const std::vector<double>& diffed, const std::vector<double>& phi,
                     const std::vector<double>& theta, double intercept);

// Explosiveness screen: expands the AR polynomial's impulse response and
// rejects coefficient vectors whose weights blow up. Unit roots pass; the
// point is finite forecasts, not textbook stationarity.
bool ar_stationary(const std::vector<double>& phi);

// Fit one (p,d,q) candidate by simplex minimization of the conditional sum
// of squares, warm-started from an ordinary least squares AR regression.
// A model that fails to converge or lands on an explosive AR polynomial
// comes back with converged=false and the reason in status.
ArimaModel fit_arima_order(const std::vector<double>& series, int p, int d, int q);

// Grid search over p in [0,max_p], q in [0,max_q], d in [0,max_d], keeping
// the converged candidate with the smallest AIC,
//   AIC = n_eff ln(SSE / n_eff) + 2 (p + q + 1),  n_eff = (n - d) - p.
// Throws DataError when the series is shorter than 10*(max_p+max_q+1) and
// BaselineError when every candidate is rejected.
ArimaModel fit_arima(const std::vector<double>& series, int max_p = 3, int max_q = 3,
                     int max_d = 2);

// Iterated forecasts 1..h steps past the end of `series`, future innovations
// set to zero, integrated back to the level of the original series. The model
// stays fixed; the residual recursion is conditioned on the history passed
// here, which may extend past the sample the model was fitted on.
std::vector<double> forecast_arima(const ArimaModel& m, const std::vector<double>& series,
                                   int h);

}  // namespace nodecast
