#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "nvrabi/analysis.hpp"
#include "nvrabi/io.hpp"
#include "nvrabi/model.hpp"
#include "nvrabi/pulse.hpp"

namespace py = pybind11;
using namespace nvrabi;

namespace {

std::vector<double> to_vector(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 1) throw InputError("expected a 1-D array");
  return {a.data(), a.data() + a.size()};
}

py::array_t<double> state_array(const model::SystemState& s) {
  return py::array_t<double>(static_cast<py::ssize_t>(s.values.size()), s.values.data());
}

model::SystemState state_from(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  if (a.ndim() != 1 || a.size() != static_cast<py::ssize_t>(model::kStateSize)) {
    throw InputError("state must be a length-8 array (n1..n7, n_c)");
  }
  model::SystemState s;
  std::copy(a.data(), a.data() + model::kStateSize, s.values.begin());
  return s;
}

// (len, 10) array: t_s, n1..n7, n_c, n_E
py::array_t<double> trace_array(const model::Trace& trace) {
  py::array_t<double> out({static_cast<py::ssize_t>(trace.size()), py::ssize_t{10}});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const auto row = static_cast<py::ssize_t>(i);
    m(row, 0) = trace[i].time;
    for (std::size_t k = 0; k < model::kStateSize; ++k) {
      m(row, static_cast<py::ssize_t>(k + 1)) = trace[i].state.values[k];
    }
    m(row, 9) = model::excited_population(trace[i].state);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Seven-level NV centre rate-equation simulator and Rabi analysis";

  py::register_exception<InputError>(m, "InputError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);

  py::class_<model::PhysicalConstants>(m, "PhysicalConstants")
      .def(py::init<>())
      .def_readwrite("gamma_c_inf", &model::PhysicalConstants::gamma_c_inf)
      .def_readwrite("gyromagnetic_hz_per_mt", &model::PhysicalConstants::gyromagnetic_hz_per_mt)
      .def_readwrite("cross_section", &model::PhysicalConstants::cross_section)
      .def_readwrite("wavelength", &model::PhysicalConstants::wavelength)
      .def_readwrite("planck_h", &model::PhysicalConstants::planck_h)
      .def_readwrite("light_c", &model::PhysicalConstants::light_c)
      .def_readwrite("gamma_2_dark", &model::PhysicalConstants::gamma_2_dark)
      .def_readwrite("pump_rate_saturation", &model::PhysicalConstants::pump_rate_saturation);

  py::class_<model::TransitionRates>(m, "TransitionRates")
      .def(py::init<>())
      .def_readwrite("k41", &model::TransitionRates::k41)
      .def_readwrite("k52", &model::TransitionRates::k52)
      .def_readwrite("k63", &model::TransitionRates::k63)
      .def_readwrite("k47", &model::TransitionRates::k47)
      .def_readwrite("k57", &model::TransitionRates::k57)
      .def_readwrite("k67", &model::TransitionRates::k67)
      .def_readwrite("k71", &model::TransitionRates::k71)
      .def_readwrite("k72", &model::TransitionRates::k72)
      .def_readwrite("k73", &model::TransitionRates::k73)
      .def("validate", &model::TransitionRates::validate)
      .def("__eq__", [](const model::TransitionRates& a, const model::TransitionRates& b) { return a == b; });

  py::class_<model::DriveParams>(m, "DriveParams")
      .def(py::init([](double wp, double omega, double gamma2) { return model::DriveParams{wp, omega, gamma2}; }),
           py::arg("pump_rate") = 0.0, py::arg("rabi_frequency") = 0.0, py::arg("decoherence_rate") = 0.0)
      .def_readwrite("pump_rate", &model::DriveParams::pump_rate)
      .def_readwrite("rabi_frequency", &model::DriveParams::rabi_frequency)
      .def_readwrite("decoherence_rate", &model::DriveParams::decoherence_rate);

  m.def("thermal_state", [] { return state_array(model::SystemState::thermal()); },
        "Thermal state [1/3, 1/3, 1/3, 0, 0, 0, 0, 0]");
  m.def("derivative",
        [](const py::array_t<double>& state, const model::TransitionRates& rates, const model::DriveParams& drive) {
          const auto d = model::derivative(state_from(state), rates, drive);
          return py::array_t<double>(static_cast<py::ssize_t>(d.size()), d.data());
        },
        py::arg("state"), py::arg("rates"), py::arg("drive"));
  m.def("integrate",
        [](const py::array_t<double>& state, const model::TransitionRates& rates, const model::DriveParams& drive,
           double duration, double dt) {
          const auto r = model::integrate(state_from(state), rates, drive, duration, dt, true);
          return py::make_tuple(state_array(r.final_state), trace_array(r.trace));
        },
        py::arg("state"), py::arg("rates"), py::arg("drive"), py::arg("duration"), py::arg("dt") = 1e-9,
        "RK4 integration; returns (final_state, trace) with trace columns t_s, n1..n7, n_c, n_E");
  m.def("steady_state",
        [](const model::TransitionRates& rates, const model::DriveParams& drive) {
          return state_array(model::steady_state(rates, drive));
        },
        py::arg("rates"), py::arg("drive"));
  m.def("gamma_c", &model::gamma_c, py::arg("saturation"), py::arg("constants") = model::PhysicalConstants{});

  py::class_<pulse::PulseSequence>(m, "PulseSequence")
      .def_readwrite("laser_duration", &pulse::PulseSequence::laser_duration)
      .def_readwrite("wait_duration", &pulse::PulseSequence::wait_duration)
      .def_readwrite("rf_duration", &pulse::PulseSequence::rf_duration)
      .def_readwrite("laser", &pulse::PulseSequence::laser)
      .def_readwrite("wait", &pulse::PulseSequence::wait)
      .def_readwrite("rf", &pulse::PulseSequence::rf)
      .def_readwrite("rates", &pulse::PulseSequence::rates)
      .def("reference", &pulse::PulseSequence::reference)
      .def("with_rf_duration", &pulse::PulseSequence::with_rf_duration);

  m.def("standard_sequence",
        [](double laser, double wp, double omega, double tau, double wait, std::optional<model::TransitionRates> rates) {
          pulse::SequenceSettings s;
          s.laser_duration = laser;
          s.pump_rate = wp;
          s.rabi_frequency = omega;
          s.rf_duration = tau;
          s.wait_duration = wait;
          if (rates) s.rates = *rates;
          return pulse::build_sequence(s);
        },
        py::arg("laser_duration") = 10e-6, py::arg("pump_rate") = 1.9e6, py::arg("rabi_frequency") = 1.5e7,
        py::arg("rf_duration") = 0.0, py::arg("wait_duration") = 400e-9, py::arg("rates") = py::none());

  m.def("steady_cycle",
        [](const pulse::PulseSequence& seq, double dt, double tol, std::size_t max_cycles, bool trace) {
          pulse::SteadyCycleOptions o{dt, tol, max_cycles, trace ? pulse::TraceMode::last_cycle : pulse::TraceMode::none};
          const auto r = pulse::iterate_to_steady_cycle(seq, o);
          py::dict d;
          d["final_state"] = state_array(r.final_state);
          d["pre_rf_state"] = state_array(r.pre_rf_state);
          d["integrated_pl"] = r.integrated_pl;
          d["cycles"] = r.cycles;
          d["residual"] = r.residual;
          d["trace"] = trace_array(r.trace);
          return d;
        },
        py::arg("sequence"), py::arg("dt") = 1e-9, py::arg("tol") = 1e-8, py::arg("max_cycles") = 1000,
        py::arg("trace") = false);
  m.def("contrast_at_tau",
        [](const pulse::PulseSequence& seq, double dt, double tol) {
          return pulse::contrast_at_tau(seq, {dt, tol, 1000, pulse::TraceMode::none});
        },
        py::arg("sequence"), py::arg("dt") = 1e-9, py::arg("tol") = 1e-8);
  m.def("simulate_rabi",
        [](const pulse::PulseSequence& seq, const py::array_t<double>& taus, double dt, double tol,
           std::size_t threads) {
          const auto t = to_vector(taus);
          pulse::SweepOptions o;
          o.cycle = {dt, tol, 1000, pulse::TraceMode::none};
          o.threads = threads;
          pulse::RabiCurve c;
          {
            py::gil_scoped_release release;
            c = pulse::simulate_rabi_sweep(seq, t, o);
          }
          return py::array_t<double>(static_cast<py::ssize_t>(c.contrast.size()), c.contrast.data());
        },
        py::arg("sequence"), py::arg("taus"), py::arg("dt") = 1e-9, py::arg("tol") = 1e-8, py::arg("threads") = 1,
        "Contrast for each tau");
  m.def("tau_grid", &pulse::tau_grid, py::arg("start"), py::arg("stop"), py::arg("step"));

  py::class_<analysis::RabiParams>(m, "RabiParams")
      .def(py::init([](double a, double b, double c, double d) { return analysis::RabiParams{a, b, c, d}; }),
           py::arg("amplitude"), py::arg("decay_time"), py::arg("angular_frequency"), py::arg("phase") = 0.0)
      .def_readwrite("amplitude", &analysis::RabiParams::amplitude)
      .def_readwrite("decay_time", &analysis::RabiParams::decay_time)
      .def_readwrite("angular_frequency", &analysis::RabiParams::angular_frequency)
      .def_readwrite("phase", &analysis::RabiParams::phase);

  py::class_<fit::FitStatus>(m, "FitStatus")
      .def_readonly("converged", &fit::FitStatus::converged)
      .def_readonly("ill_conditioned", &fit::FitStatus::ill_conditioned)
      .def_readonly("iterations", &fit::FitStatus::iterations)
      .def_readonly("condition_number", &fit::FitStatus::condition_number)
      .def_readonly("message", &fit::FitStatus::message)
      .def_property_readonly("ok", &fit::FitStatus::ok);

  py::class_<analysis::RabiFit>(m, "RabiFit")
      .def_readonly("params", &analysis::RabiFit::params)
      .def_readonly("residual_rms", &analysis::RabiFit::residual_rms)
      .def_readonly("covariance", &analysis::RabiFit::covariance)
      .def_readonly("status", &analysis::RabiFit::status)
      .def_property_readonly("valid", &analysis::RabiFit::valid);

  m.def("rabi_model",
        [](const analysis::RabiParams& p, const py::array_t<double>& tau) {
          const auto t = to_vector(tau);
          py::array_t<double> out(static_cast<py::ssize_t>(t.size()));
          auto o = out.mutable_unchecked<1>();
          for (std::size_t i = 0; i < t.size(); ++i) o(static_cast<py::ssize_t>(i)) = analysis::rabi_model(p, t[i]);
          return out;
        },
        py::arg("params"), py::arg("tau"));
  m.def("fit_rabi",
        [](const py::array_t<double>& tau, const py::array_t<double>& contrast,
           std::optional<analysis::RabiParams> guess) {
          return analysis::fit_rabi(to_vector(tau), to_vector(contrast), guess);
        },
        py::arg("tau"), py::arg("contrast"), py::arg("guess") = py::none());
  m.def("second_harmonic_residual",
        [](const py::array_t<double>& tau, const py::array_t<double>& contrast, const analysis::RabiParams& p) {
          return analysis::second_harmonic_residual(to_vector(tau), to_vector(contrast), p);
        },
        py::arg("tau"), py::arg("contrast"), py::arg("params"));
  m.def("fft_rabi_frequency",
        [](const py::array_t<double>& tau, const py::array_t<double>& values) {
          return analysis::fft_rabi_frequency(to_vector(tau), to_vector(values));
        },
        py::arg("tau"), py::arg("values"));
  m.def("b_field_from_rabi", &analysis::b_field_from_rabi, py::arg("nu_hz"),
        py::arg("constants") = model::PhysicalConstants{});

  py::class_<analysis::ContrastStack>(m, "ContrastStack")
      .def(py::init([](const py::array_t<float, py::array::c_style | py::array::forcecast>& data,
                       const py::array_t<double>& tau, double um_per_pixel) {
             if (data.ndim() != 3) throw InputError("stack data must have shape (nx, ny, ntau)");
             analysis::ContrastStack s;
             s.nx = static_cast<std::size_t>(data.shape(0));
             s.ny = static_cast<std::size_t>(data.shape(1));
             s.tau = to_vector(tau);
             if (static_cast<std::size_t>(data.shape(2)) != s.tau.size()) {
               throw InputError("stack data tau axis does not match tau");
             }
             s.um_per_pixel = um_per_pixel;
             s.contrast.assign(data.data(), data.data() + data.size());
             s.validate();
             return s;
           }),
           py::arg("data"), py::arg("tau"), py::arg("um_per_pixel") = 1.0)
      .def_readonly("nx", &analysis::ContrastStack::nx)
      .def_readonly("ny", &analysis::ContrastStack::ny)
      .def_readonly("um_per_pixel", &analysis::ContrastStack::um_per_pixel)
      .def_readonly("tau", &analysis::ContrastStack::tau)
      .def_property_readonly("data", [](const analysis::ContrastStack& s) {
        return py::array_t<float>({static_cast<py::ssize_t>(s.nx), static_cast<py::ssize_t>(s.ny),
                                   static_cast<py::ssize_t>(s.ntau())},
                                  s.contrast.data());
      });

  m.def("synthetic_stack",
        [](std::size_t nx, std::size_t ny, std::size_t ntau, double um_per_pixel, double tau_start,
           double tau_step, double amplitude, double decay, std::optional<double> uniform_mt, double a_w,
           double b_w, double c_w, double noise, std::uint64_t seed) {
          analysis::SyntheticStackParams s{nx, ny, ntau, um_per_pixel, tau_start, tau_step, amplitude, decay,
                                         uniform_mt, a_w, b_w, c_w, noise, seed};
          return analysis::synthetic_stack(s);
        },
        py::arg("nx") = 64, py::arg("ny") = 20, py::arg("ntau") = 128, py::arg("um_per_pixel") = 1.0,
        py::arg("tau_start") = 0.0, py::arg("tau_step") = 20e-9, py::arg("amplitude") = 0.02,
        py::arg("decay") = 2e-6, py::arg("uniform_mt") = py::none(), py::arg("a_w") = 10.0,
        py::arg("b_w") = 57.0, py::arg("c_w") = 0.0, py::arg("noise") = 0.0, py::arg("seed") = 1);

  m.def("map_field_profile",
        [](const analysis::ContrastStack& stack, std::size_t y_center, std::size_t window, std::size_t threads) {
          const auto p = analysis::map_field_profile(stack, y_center, window, threads);
          py::dict d;
          d["x_um"] = p.x_um;
          d["nu_R_Hz"] = p.nu_hz;
          d["B_R_mT"] = p.b_mt;
          return d;
        },
        py::arg("stack"), py::arg("y_center"), py::arg("window") = 10, py::arg("threads") = 1);

  py::class_<analysis::WireFit>(m, "WireFit")
      .def_readonly("a_w", &analysis::WireFit::a_w)
      .def_readonly("b_w", &analysis::WireFit::b_w)
      .def_readonly("c_w", &analysis::WireFit::c_w)
      .def_readonly("residual_rms", &analysis::WireFit::residual_rms)
      .def_readonly("covariance", &analysis::WireFit::covariance)
      .def_readonly("status", &analysis::WireFit::status)
      .def_property_readonly("valid", &analysis::WireFit::valid);
  m.def("fit_wire_decay",
        [](const py::array_t<double>& x_um, const py::array_t<double>& b_mt, double c_w,
           std::optional<double> x_min, std::optional<double> x_max) {
          analysis::FieldProfile p;
          p.x_um = to_vector(x_um);
          p.b_mt = to_vector(b_mt);
          p.nu_hz.assign(p.x_um.size(), 0.0);
          return analysis::fit_wire_decay(p, c_w, x_min, x_max);
        },
        py::arg("x_um"), py::arg("b_mt"), py::arg("c_w"), py::arg("x_min") = py::none(),
        py::arg("x_max") = py::none());

  py::class_<analysis::SaturationFit>(m, "SaturationFit")
      .def_readonly("a_p", &analysis::SaturationFit::a_p)
      .def_readonly("pump_rate_sat", &analysis::SaturationFit::pump_rate_sat)
      .def_readonly("residual_rms", &analysis::SaturationFit::residual_rms)
      .def_readonly("covariance", &analysis::SaturationFit::covariance)
      .def_readonly("status", &analysis::SaturationFit::status)
      .def_property_readonly("valid", &analysis::SaturationFit::valid);
  m.def("saturation_scan",
        [](const model::TransitionRates& rates, const py::array_t<double>& pump_rates) {
          const auto scan = analysis::saturation_scan(rates, to_vector(pump_rates));
          std::vector<double> ne;
          for (const auto& p : scan) ne.push_back(p.excited_population);
          return ne;
        },
        py::arg("rates"), py::arg("pump_rates"), "Steady-state n_E for each pump rate");
  m.def("fit_saturation",
        [](const py::array_t<double>& pump_rates, const py::array_t<double>& excited) {
          const auto w = to_vector(pump_rates);
          const auto n = to_vector(excited);
          if (w.size() != n.size()) throw InputError("fit_saturation: length mismatch");
          std::vector<analysis::SaturationPoint> scan;
          for (std::size_t i = 0; i < w.size(); ++i) scan.push_back({w[i], n[i]});
          return analysis::fit_saturation(scan);
        },
        py::arg("pump_rates"), py::arg("excited"));
  m.def("log_space", &analysis::log_space, py::arg("lo"), py::arg("hi"), py::arg("count"));
  m.def("saturation_intensity", &analysis::saturation_intensity, py::arg("pump_rate_sat"),
        py::arg("constants") = model::PhysicalConstants{});
  m.def("saturation_power", &analysis::saturation_power, py::arg("intensity_sat"), py::arg("beam_waist"));
  m.def("saturation_parameter", &analysis::saturation_parameter, py::arg("power"), py::arg("power_sat"));
  m.def("depletion_time",
        [](const model::TransitionRates& rates, double s) { return analysis::depletion_time(rates, s); },
        py::arg("rates"), py::arg("saturation") = 0.1);
  m.def("polarization_time",
        [](const model::TransitionRates& rates, double s, double threshold) {
          return analysis::polarization_time(rates, s, threshold);
        },
        py::arg("rates"), py::arg("saturation") = 0.1, py::arg("threshold") = 0.99);

  m.def("read_stack", &io::read_stack_file, py::arg("path"));
  m.def("write_stack",
        [](const std::filesystem::path& path, const analysis::ContrastStack& stack, bool big_endian) {
          io::write_stack_file(path, stack, big_endian ? io::ByteOrder::big : io::ByteOrder::little);
        },
        py::arg("path"), py::arg("stack"), py::arg("big_endian") = false);
  m.def("effective_config", [](const std::string& text) { return io::serialize_config(io::parse_config(text)); },
        py::arg("text") = "", "Config text with every default filled in");
}
