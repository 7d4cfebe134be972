import pytest

RASTER_S_TEXT = "threshold,x,y,member\n" + "".join(
    f"{t},{x},{y},{int(abs(x) + abs(y) < lim)}\n"
    for t, lim in ((0.7, 1.0), (1.5, 3.0))
    for y in (-1.0, 0.0, 1.0)
    for x in (-1.0, 0.0, 1.0)
)

RASTER_T_TEXT = "kappa,x,y,member,similarity\n" + "".join(
    f"{k},{x},{y},{int(x * x + y * y > 0.5)},-0.25\n"
    for k in (0.1, 0.9)
    for y in (-1.0, 0.0, 1.0)
    for x in (-1.0, 0.0, 1.0)
)

TRACE_TEXT = "step,h,delta,delta_defined,C,s_flag,dist_opt,pca_x,pca_y,opt_pca_x,opt_pca_y\n" + "".join(
    f"{k},{10.0 - k},0.5,1,2.0,1,{5.0 - 0.4 * k},{2.0 - 0.2 * k},{1.0 - 0.1 * k},0.3,0.1\n"
    for k in range(10)
)

CURVES_TEXT = "layer,mean,q1,median,q3\n" + "".join(
    f"{k},{8.0 - 2.0 * k},{7.0 - 2.0 * k},{7.8 - 2.0 * k},{8.5 - 2.0 * k}\n"
    for k in range(4)
)


@pytest.fixture
def csv_dir(tmp_path):
    (tmp_path / "raster_s.csv").write_text(RASTER_S_TEXT)
    (tmp_path / "raster_t.csv").write_text(RASTER_T_TEXT)
    (tmp_path / "aim_trace.csv").write_text(TRACE_TEXT)
    (tmp_path / "energy_curves.csv").write_text(CURVES_TEXT)
    return tmp_path
