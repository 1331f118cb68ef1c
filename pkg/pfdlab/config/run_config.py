from easydict import EasyDict as edict

__C = edict()
cfg = __C

##################################
# general parameters
##################################
__C.general = {}

# the folder receiving the artifacts and the log file of a run
__C.general.output = './pfdlab_out'

# seed of every random draw (Monte-Carlo samples, randomized stimuli)
__C.general.seed = 0

# number of worker threads for sweep and Monte-Carlo points
# Options:
# 1) 0: read PFDLAB_THREADS, falling back to the cpu count
# 2) a positive number: use exactly that many workers
__C.general.threads = 0

##################################
# switch-level simulation parameters
##################################
__C.sim = {}

# the device delay used when neither an override nor a netlist attribute sets one (unit: fs)
__C.sim.default_delay = 10000

# the uniform device delay giving the reference detector a 40 ps dead zone (unit: fs)
# reproduced by measure.calibrate_switch_delay
__C.sim.calibrated_delay = 2300

# exclusive width the charge pump behind the switch-level detector needs before it conducts (unit: fs)
__C.sim.pump_setup = 37700

# zero-delay resolution rounds allowed at one timestamp before the run is aborted
__C.sim.oscillation_bound = 1000

# add the inverter pairs X -> Up and Y -> Down to the reference netlist
__C.sim.output_buffers = False

# waveform export format
# Options:
# 1) csv: time_fs,net,value rows
# 2) vcd: value change dump with 1 fs timescale
__C.sim.waveform_format = 'csv'

##################################
# behavioral detector parameters (unit: fs)
##################################
__C.pfd = {}

# smallest exclusive pulse width the charge pump reacts to
__C.pfd.t_setup = 40000

# time both outputs stay high together before they are cleared
__C.pfd.t_reset = 30000

# edge to output rise delay
__C.pfd.t_out_rise = 10000

# reset to output fall delay
__C.pfd.t_out_fall = 10000

# edges within this window after a reset starts are lost; 0 for the proposed design
__C.pfd.blind_window = 0

# a stricter pulse width limit of the charge pump, 0 to disable
__C.pfd.min_effective_pulse = 0

##################################
# loop parameters
##################################
__C.loop = {}

# Options:
# 1) PLL: the VCO output divided by divider_n is fed back
# 2) DLL: the reference delayed by the voltage controlled delay line is fed back
__C.loop.mode = 'PLL'

# reference frequency (unit: Hz)
__C.loop.f_ref = 1e9

__C.loop.divider_n = 1

# charge pump currents (unit: A)
__C.loop.icp_up = 50e-6
__C.loop.icp_down = 50e-6
__C.loop.leakage = 0.0

# loop filter: series r-c1 with an optional shunt c2 (units: ohm, F, F or None)
__C.loop.r = 10e3
__C.loop.c1 = 10e-12
__C.loop.c2 = None

# VCO: f = f0 + kvco * v (units: Hz, Hz/V)
__C.loop.f0 = 0.9e9
__C.loop.kvco = 500e6

# delay line: d = d0 - kdl * v (units: s, s/V)
__C.loop.d0 = 1.2e-9
__C.loop.kdl = 0.5e-9

# initial control voltage (unit: V)
__C.loop.v_init = 0.0

# phase error tolerance of the lock detector (unit: rad)
__C.loop.lock_tolerance = 0.05

# consecutive in-tolerance cycles declaring lock
__C.loop.lock_cycles = 50

# cycles simulated after lock to measure the steady state
__C.loop.settle_cycles = 100

# reference cycles simulated at most
__C.loop.max_cycles = 5000

##################################
# measurement parameters
##################################
__C.measure = {}

# input frequency (unit: Hz)
__C.measure.freq = 1e9

# number of phase points of the transfer sweep, odd so that zero is included
__C.measure.points = 201

# cycles averaged per transfer point, after warmup cycles
__C.measure.cycles = 16
__C.measure.warmup = 4

# dead-zone and blind-zone bisection resolution (unit: fs)
__C.measure.resolution = 1

# edge positions scanned across the reset window by the blind-zone measurement
__C.measure.blind_steps = 200

# Monte-Carlo parameters: samples, relative variation at 3 sigma, phase error and histogram bins
__C.measure.samples = 5000
__C.measure.sigma = 0.10
__C.measure.phi = '0.2pi'
__C.measure.bins = 50

# phase error of the PVT sweep
__C.measure.pvt_phi = '0.1pi'

# PVT grid (units: degree C, V)
__C.measure.temps = [-25, 0, 25, 50, 75, 100, 125]
__C.measure.vdds = [0.9, 1.0, 1.1]

# per-net weights of the toggle count proxy, missing nets weigh 1
__C.measure.activity_weights = {}
