#pragma once

namespace sizeloop {

/// Built-in sizing plan for both two-stage Miller-compensated OTA polarities.
/// Device naming convention: M1/M2 input pair (M1 carries the feedback gate),
/// M3/M4 first-stage mirror load, M6 bias diode fed by IREF, M5 tail mirror,
/// M7 output-stage mirror, M8 common-source gain device; CC/RZ compensation,
/// CL load.
inline const char* kTwoStageMillerPlan = R"(# Two-stage Miller OTA sizing, either input polarity.
plan two_stage_miller for 2SMC

classify M1 independent
classify M2 matched M1
classify M3 independent
classify M4 matched M3
classify M6 independent
classify M5 mirror of M6
classify M7 mirror of M6
classify M8 independent

length M1 = 0.2u
length M3 = 0.2u
length M6 = 0.2u
length M8 = 0.2u

let vov1 = 0.1
let vov3 = 0.15
let vov6 = 0.18
let vov8 = 0.15
let cc = 0.5p
let iref = 10u

# Current design: jointly set by GBW and SR.
# Relationship: SR_internal = 2*pi*GBW*Vov1
let sr_internal_from_gbw = 2*pi*target.gbw*vov1
if sr_internal_from_gbw >= target.sr {
    let gbw_design = target.gbw
} else {
    let gbw_design = target.sr/(2*pi*vov1)
}

let gm1 = 2*pi*gbw_design*cc
let itail = gm1*vov1/calib.M1.a_gm
let id1 = itail/2

# Second-stage current: output SR and the non-dominant pole (fp2 >= 2.2*GBW)
let id2_sr = target.sr*target.cl
let gm8_req = 2.2*2*pi*gbw_design*target.cl
let id2_pm = gm8_req*vov8/(2*calib.M8.a_gm)
let id2 = max(id2_sr, id2_pm)

size independent M1 current=id1 vov=vov1
size independent M3 current=id1 vov=vov3
size independent M6 current=iref vov=vov6
size mirror M5 from M6 carrying itail
size mirror M7 from M6 carrying id2
size independent M8 current=id2 vov=vov8

set source.IREF = iref
set passive.CC = cc

# Small-signal values recomputed from the sized geometry
let gm1_sized = calib.M1.a_gm*sqrt(2*calib.M1.mu_cox*(dev.M1.w/dev.M1.l)*id1)
let gm8_sized = calib.M8.a_gm*sqrt(2*calib.M8.mu_cox*(dev.M8.w/dev.M8.l)*id2)

# Nulling resistor cancels the RHP zero: R = 1/gm8
set passive.RZ = 1/gm8_sized

let ro2 = 1/(calib.M2.lambda*id1)
let ro4 = 1/(calib.M4.lambda*id1)
let ro7 = 1/(calib.M7.lambda*id2)
let ro8 = 1/(calib.M8.lambda*id2)
let av0 = gm1_sized*parallel(ro2,ro4)*gm8_sized*parallel(ro7,ro8)
let gbw_hat = gm1_sized/(2*pi*cc)
let p2_hat = gm8_sized/target.cl

predict av = 20*log10(av0)
predict gbw = gbw_hat
predict pm = 90 - atan(2*pi*gbw_hat/p2_hat)*180/pi
predict sr_pos = itail/cc
predict sr_neg = id2/target.cl
predict power = (iref + itail + id2)*(supply.vdd - supply.vss)
)";

} // namespace sizeloop
