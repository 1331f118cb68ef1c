from easydict import EasyDict as edict

__C = edict()
cfg = __C

##################################
# fitted delay scale s(V, T) = (1 + a (V - v0)) (1 + b (T - t0)), reported widths are width_gain * s * width
# reproduced by measure.fit_pvt_model with the anchors below
##################################
__C.model = {}

__C.model.v_nominal = 1.0
__C.model.t_nominal = 25.0

# a, b >= 0 keep s monotone over the grid
__C.model.a = 0.438277
__C.model.b = 6.74577e-4

# the measured nominal pulse width over the ideal one
__C.model.width_gain = 0.941149

__C.model.temp_range = [-25.0, 125.0]
__C.model.vdd_range = [0.9, 1.1]

##################################
# fit anchors
##################################
__C.anchors = {}

# width(1.1 V) / width(0.9 V), same at every temperature
__C.anchors.voltage_ratio = 1.1
__C.anchors.voltage_ratio_tol = 0.02

# width(100 C) / width(25 C)
__C.anchors.temp_ratio = 1.055
__C.anchors.temp_ratio_tol = 0.01

# the ideal width the corners refer to (unit: fs)
__C.anchors.nominal_width = 50000

# corner widths (unit: fs) at (temperature, vdd)
__C.anchors.corner_low = [-25.0, 0.9, 44000]
__C.anchors.corner_high = [125.0, 1.1, 52000]
__C.anchors.corner_tol = 1000
